"""
Tests for the applications built on the solver: heat-method geodesic distance,
surface diffusion curves and wave animation.
"""

import numpy as np
import pytest
import trimesh
from PIL import Image
from pydantic import ValidationError

from app.errors import BoundaryError
from app.services.diffusion_curves import (
    CameraConfig,
    camera_rays,
    linear_to_srgb,
    render_diffusion_curves,
    solve_diffusion_on_vertices,
    write_image,
)
from app.services.filtering import FilterOptions
from app.services.geodesic import (
    HeatConfig,
    calibrate_to_shell,
    default_heat_time,
    geodesic_distance,
    normalized_field,
)
from app.services.geometry import SurfaceScene
from app.services.medial import ConstantFeatureSize
from app.services.solver import SolverConfig
from app.services.wave import WaveConfig, WaveState, default_dt, simulate_wave, wave_step

COLOR = [0.2, 0.4, 0.6]


@pytest.fixture(scope="module")
def small_sphere():
    mesh = trimesh.creation.icosphere(subdivisions=2, radius=1.0)
    return SurfaceScene(np.asarray(mesh.vertices), triangles=np.asarray(mesh.faces))


@pytest.fixture(scope="module")
def small_cloud():
    vertices = np.asarray(trimesh.creation.icosphere(subdivisions=3, radius=1.0).vertices)
    return SurfaceScene(vertices, points=np.arange(len(vertices)), normals=vertices)


@pytest.fixture
def colored_equator(equator_boundary):
    return equator_boundary.with_values(np.tile(COLOR, (256, 1)))


# Geodesic distance


def test_normalized_field_fills_degenerate_rows():
    """Vanishing gradients copy the direction of the nearest valid vertex."""
    gradients = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    points = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    np.testing.assert_allclose(normalized_field(gradients, points), [[-1, 0, 0], [-1, 0, 0]])
    np.testing.assert_allclose(normalized_field(np.zeros((2, 3)), points), 0.0)


def test_default_heat_time():
    """t = (2 × mean feature size)²."""
    assert default_heat_time(ConstantFeatureSize(0.5), np.zeros((3, 3))) == pytest.approx(1.0)


def test_geodesic_needs_a_boundary(small_sphere):
    """No boundary, no distance."""
    with pytest.raises(BoundaryError):
        geodesic_distance(small_sphere, None, feature_size=ConstantFeatureSize(0.5))


def test_geodesic_distance_to_equator(small_sphere, equator_boundary):
    """Distances are nonnegative, small at the equator and large at the poles."""
    cfg = HeatConfig(solver=SolverConfig(epsilon=1e-2, n_paths=32, n_volume=4, seed=3))
    phi = geodesic_distance(
        small_sphere, equator_boundary, cfg, feature_size=ConstantFeatureSize(0.5)
    )
    latitude = np.abs(np.arcsin(np.clip(small_sphere.vertices[:, 2], -1.0, 1.0)))
    assert phi.shape == (small_sphere.vertex_count,)
    assert np.all(phi >= 0.0)
    assert phi[latitude < 0.05].max() < 0.3
    assert phi[latitude > 1.2].mean() > phi[latitude < 0.4].mean()


def test_calibrate_to_shell():
    """An exact solve against a shell of width s gives back the boundary distance."""
    d = np.array([0.0, 0.1, 0.25, 0.4, 1.2])
    phi = np.maximum(d - 0.2, 0.0)
    np.testing.assert_allclose(calibrate_to_shell(phi, d, 0.2), d)
    np.testing.assert_allclose(calibrate_to_shell(phi + 0.05, d, 0.2), d)
    np.testing.assert_allclose(calibrate_to_shell([0.0, 0.5], [0.0, 0.5], 1e-3), [0.0, 0.501])


@pytest.mark.slow
@pytest.mark.parametrize("surface", ["small_sphere", "small_cloud"])
def test_geodesic_distance_accuracy(surface, equator_boundary, request):
    """On the mesh and on the cloud the RMSE to |latitude| stays below 5% of π/2."""
    scene = request.getfixturevalue(surface)
    cfg = HeatConfig(solver=SolverConfig(epsilon=1e-3, n_paths=1024, n_volume=16, seed=3))
    phi = geodesic_distance(scene, equator_boundary, cfg, feature_size=ConstantFeatureSize(0.5))
    latitude = np.abs(np.arcsin(np.clip(scene.vertices[:, 2], -1.0, 1.0)))
    assert np.sqrt(np.mean((phi - latitude) ** 2)) < 0.05 * np.pi / 2.0


# Diffusion curves


def test_camera_validation():
    """Vectors need three components and the field of view must be open."""
    with pytest.raises(ValidationError):
        CameraConfig(position=[0.0, 1.0])
    with pytest.raises(ValidationError):
        CameraConfig(fov=180.0)


def test_camera_rays(rng):
    """One jittered unit ray per sample, all looking forward."""
    camera = CameraConfig(width=4, height=3, samples_per_pixel=2)
    origins, directions = camera_rays(camera, rng)
    assert origins.shape == directions.shape == (24, 3)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)
    assert np.all(directions[:, 2] < 0.0)


def test_render_constant_curves(unit_sphere, colored_equator):
    """Visible pixels take the curve color, misses keep the background."""
    camera = CameraConfig(width=8, height=6)
    cfg = SolverConfig(epsilon=1e-2, n_paths=4, seed=2)
    image = render_diffusion_curves(
        unit_sphere, colored_equator, camera, cfg, feature_size=ConstantFeatureSize(0.5)
    )
    assert image.shape == (6, 8, 3)
    np.testing.assert_allclose(image[3, 4], COLOR)
    np.testing.assert_allclose(image[0, 0], camera.background)


def test_vertex_diffusion_of_constant_colors(unit_sphere, colored_equator):
    """Constant curve colors are reproduced at every vertex, filtered or not."""
    cfg = SolverConfig(epsilon=1e-2, seed=2)
    options = FilterOptions(n_filter_samples=8, iterations=3, initial_paths=1)
    colors = solve_diffusion_on_vertices(
        unit_sphere, colored_equator, cfg, options, feature_size=ConstantFeatureSize(0.5)
    )
    assert colors.shape == (unit_sphere.vertex_count, 3)
    np.testing.assert_allclose(colors, np.tile(COLOR, (unit_sphere.vertex_count, 1)))


def test_two_sided_curves_separate_hemispheres(unit_sphere, equator_boundary):
    """The northern side of the equator sees the second color."""
    curves = equator_boundary.with_values(np.zeros(256), values_other=np.ones(256))
    cfg = SolverConfig(epsilon=1e-2, seed=2)
    values = solve_diffusion_on_vertices(
        unit_sphere,
        curves,
        cfg,
        FilterOptions(n_filter_samples=8, iterations=2, initial_paths=4),
        feature_size=ConstantFeatureSize(0.5),
    )[:, 0]
    z = unit_sphere.vertices[:, 2]
    assert values[z > 0.2].mean() > 0.9
    assert values[z < -0.2].mean() < 0.1


def test_srgb_encoding():
    """Linear segment near zero, power curve above."""
    np.testing.assert_allclose(
        linear_to_srgb([0.0, 0.002, 0.5, 1.0, 2.0]),
        [0.0, 0.02584, 0.73536, 1.0, 1.0],
        atol=1e-4,
    )


@pytest.mark.parametrize("name", ["image.png", "image.ppm"])
def test_write_image(tmp_path, name):
    """Images are written with the format given by the extension."""
    path = tmp_path / "out" / name
    write_image(str(path), np.full((6, 8, 3), 0.5))
    with Image.open(path) as image:
        assert image.size == (8, 6)
        assert image.mode == "RGB"
        assert image.getpixel((0, 0)) == (188, 188, 188)


# Waves


def test_wave_state_validation():
    """Lengths must agree and dt must be positive."""
    with pytest.raises(ValueError):
        WaveState(u_curr=np.zeros(3), u_prev=np.zeros(2), dt=0.1, wave_speed=1.0)
    with pytest.raises(ValueError):
        WaveState(u_curr=np.zeros(3), u_prev=np.zeros(3), dt=0.0, wave_speed=1.0)
    state = WaveState(u_curr=np.zeros(3), u_prev=np.zeros(3), dt=0.5, wave_speed=2.0)
    assert state.sigma == pytest.approx(1.0)


def test_default_dt():
    """dt = mean feature size / wave speed."""
    assert default_dt(ConstantFeatureSize(0.5), np.zeros((4, 3)), 2.0) == pytest.approx(0.25)


def test_wave_step_checks_length(small_sphere):
    """The state must cover every vertex."""
    state = WaveState(u_curr=np.zeros(3), u_prev=np.zeros(3), dt=0.5, wave_speed=1.0)
    with pytest.raises(ValueError):
        wave_step(small_sphere, state, None, SolverConfig(), ConstantFeatureSize(0.5))


def test_wave_at_rest_stays_constant(small_sphere, tmp_path):
    """A constant state at rest is stationary; frames are written as PLY."""
    wave_cfg = WaveConfig(frames=2, pinned_frames=0)
    solver_cfg = SolverConfig(epsilon=1e-2, n_paths=16, n_volume=4, seed=6)
    history = simulate_wave(
        small_sphere,
        wave_cfg,
        solver_cfg,
        output_dir=str(tmp_path / "frames"),
        feature_size=ConstantFeatureSize(0.5),
        initial=np.ones(small_sphere.vertex_count),
    )
    assert len(history) == 2
    for frame in history:
        assert np.mean(frame) == pytest.approx(1.0, abs=0.05)
    assert (tmp_path / "frames" / "frame_0000.ply").exists()
    assert (tmp_path / "frames" / "frame_0001.ply").exists()


def test_pinned_vertex_drives_the_wave(small_sphere):
    """Starting from zero, the pinned vertex is the only source of motion."""
    wave_cfg = WaveConfig(frames=1, pinned_frames=1, pinned_vertex=0)
    history = simulate_wave(
        small_sphere,
        wave_cfg,
        SolverConfig(epsilon=1e-2, n_paths=8, n_volume=2, seed=6),
        feature_size=ConstantFeatureSize(0.5),
    )
    assert np.all(history[0] >= 0.0)
    assert history[0][0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        simulate_wave(
            small_sphere,
            WaveConfig(pinned_vertex=10_000),
            SolverConfig(),
            feature_size=ConstantFeatureSize(0.5),
        )
