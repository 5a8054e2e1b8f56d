"""
Tests for medial ball shrinking, pruning and the local feature size.
"""

import numpy as np
import pytest

from app.errors import MedialAxisError
from app.services.medial import (
    ConstantFeatureSize,
    MedialAtlas,
    MedialBall,
    extract_atlas,
    local_feature_size,
    prune,
    prune_indices,
    scatter_seeds,
    shrink_ball,
    termination_tolerance,
)


def test_inner_ball_of_sphere(unit_sphere):
    """The inward ball at a face point is (nearly) the unit ball."""
    hit = unit_sphere.closest_points(unit_sphere.vertices[unit_sphere.triangles[0]].mean(axis=0))
    normal = unit_sphere.frames(hit)[0]
    inward = -normal if normal @ hit.points[0] > 0 else normal
    ball = shrink_ball(unit_sphere, hit.points[0], inward, initial_radius=3.0)
    assert ball is not None
    assert 0.8 < ball.radius <= 1.01
    assert np.linalg.norm(ball.center) < 0.2


def test_outer_ball_of_convex_scene_keeps_its_radius(unit_sphere):
    """Nothing stops an outward ball on a convex surface."""
    hit = unit_sphere.closest_points(unit_sphere.vertices[unit_sphere.triangles[0]].mean(axis=0))
    normal = unit_sphere.frames(hit)[0]
    outward = normal if normal @ hit.points[0] > 0 else -normal
    ball = shrink_ball(unit_sphere, hit.points[0], outward, initial_radius=3.0)
    assert ball.radius == pytest.approx(3.0)


def test_prune_removes_contained_balls():
    """A small ball well inside a big one goes; a distant one stays."""
    centers = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0]])
    radii = np.array([1.0, 0.5, 0.5])
    np.testing.assert_array_equal(prune_indices(centers, radii, 1.15), [0, 2])

    balls = [MedialBall(c, r, c, 1) for c, r in zip(centers, radii)]
    assert [b.radius for b in prune(balls)] == [1.0, 0.5]
    assert prune([]) == []
    with pytest.raises(MedialAxisError):
        prune_indices(centers, radii, 1.0)


def test_atlas_feature_size_has_a_floor():
    """lfs = max(λ, c × distance to the nearest center)."""
    atlas = MedialAtlas([[0.0, 0.0, 0.0]], [1.0], lam=0.2)
    np.testing.assert_allclose(atlas.local_feature_size([[0.1, 0, 0], [1.0, 0, 0]]), [0.2, 0.9])
    assert local_feature_size(atlas, [2.0, 0.0, 0.0]) == pytest.approx(1.8)
    assert atlas.summary()["centers"] == 1
    with pytest.raises(MedialAxisError):
        MedialAtlas(np.empty((0, 3)), [], lam=0.1)
    with pytest.raises(MedialAxisError):
        MedialAtlas([[0.0, 0.0, 0.0]], [1.0], lam=0.0)


def test_constant_feature_size():
    """The forced value is returned everywhere."""
    lfs = ConstantFeatureSize(0.25)
    np.testing.assert_allclose(lfs.local_feature_size(np.zeros((4, 3))), 0.25)
    with pytest.raises(MedialAxisError):
        ConstantFeatureSize(0.0)


def test_seeds_fill_the_bounding_ball(unit_sphere, rng):
    """Seeds lie within half a diagonal of the box center."""
    seeds = scatter_seeds(unit_sphere, 500, rng)
    assert seeds.shape == (500, 3)
    assert np.all(np.linalg.norm(seeds - unit_sphere.center, axis=1) <= 0.5 * unit_sphere.diagonal)
    with pytest.raises(MedialAxisError):
        scatter_seeds(unit_sphere, 0, rng)


def test_termination_tolerance(unit_sphere, sphere_cloud):
    """Meshes use a fraction of the diagonal; point clouds the sample spacing."""
    assert termination_tolerance(unit_sphere) == pytest.approx(1e-4 * unit_sphere.diagonal)
    assert termination_tolerance(sphere_cloud) > 1e-4 * sphere_cloud.diagonal


def test_sphere_atlas(unit_sphere):
    """On the unit sphere the feature size at the surface is about 0.9."""
    atlas = extract_atlas(unit_sphere, seed_count=2000, rng=np.random.default_rng(3))
    lfs = atlas.local_feature_size(unit_sphere.vertices)
    assert np.all(lfs > 0.7)
    assert np.all(lfs < 1.0)
    assert atlas.lam == pytest.approx(0.01 * unit_sphere.diagonal)


def test_atlas_is_reproducible(unit_sphere):
    """Equal seeds give equal atlases."""
    first = extract_atlas(unit_sphere, seed_count=300, rng=np.random.default_rng(9))
    second = extract_atlas(unit_sphere, seed_count=300, rng=np.random.default_rng(9))
    np.testing.assert_array_equal(first.centers, second.centers)


def test_point_cloud_atlas(sphere_cloud):
    """Oriented points use their normals as shrinking directions."""
    atlas = extract_atlas(sphere_cloud, seed_count=500, rng=np.random.default_rng(5))
    lfs = atlas.local_feature_size(sphere_cloud.vertices)
    assert len(atlas) >= 1
    assert np.all(lfs >= atlas.lam)
    assert np.all(np.isfinite(lfs))


def test_atlas_arguments(unit_sphere):
    """Invalid pruning scale and floor are rejected."""
    with pytest.raises(MedialAxisError):
        extract_atlas(unit_sphere, seed_count=10, s=1.0)
    with pytest.raises(MedialAxisError):
        extract_atlas(unit_sphere, seed_count=10, lam=-1.0)
