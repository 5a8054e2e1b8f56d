"""
Builtin analytic scenes for convergence studies.

Curves:
- a, b: Three-turn helix of radius 1 and height 2 (Laplace / Poisson).
- c, d: Z-order polyline through the corners of [-1, 1]³ (Poisson; pruning scale 1.15 / 1.05).
- e: Unit circle with a two-sided point boundary.
Surfaces:
- f: Torus with a torus-knot boundary (no analytic solution).
- g, h: Ellipsoid (x1 - x3)² + x2² + x3² = 1, screened, with and without a boundary.
- i-l: Unit sphere with a degree-3 spherical harmonic source.
- m-p: The same problems on a sphere whose upper cap is pushed inward.
- strip_high, strip_mid, strip_low: 10 × 2 strips bent along sinusoids.
- disk: Unit disk bent onto a cylinder, u = ρ³ sin 3θ.

Every scene carries a chart (a parametrization of the smooth surface) used for
probe sampling and for a finite-difference Laplace-Beltrami check of the
solution and source pair.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional

import numpy as np
import trimesh
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, special
from scipy.spatial import Delaunay

from app.errors import SceneError
from app.services.geometry import DirichletBoundary, SurfaceScene
from app.services.solver import SolverConfig, SourceTerm, build_atlas
from app.utils import get_logger

harness_logger = get_logger("harness_logger", "harness.log")

HELIX_TURNS = 3
THETA_C = 1.022 * np.pi
Y_SCALE = 0.25 * np.sqrt(105.0 / np.pi)
PUNCH_HEIGHT = 0.25
STRIP_LENGTH = 10.0
STRIP_WIDTH = 2.0
STRIP_AMPLITUDE = 0.5
STRIP_FREQUENCIES = {"strip_high": np.pi, "strip_mid": np.pi / 2.0, "strip_low": np.pi / 5.0}
TORUS_R, TORUS_r = 3.0, 1.0
KNOT_P, KNOT_Q = 3, 7


class Tessellation(BaseModel):
    """Discretization densities of the builtin scenes."""

    model_config = ConfigDict(frozen=True)

    curve_segments: int = Field(default=4096, ge=8)
    sphere_subdivisions: int = Field(default=5, ge=1, le=7)
    grid_cells: int = Field(default=10_000, ge=16)
    disk_points: int = Field(default=10_000, ge=64)


@dataclass(frozen=True)
class Chart:
    """
    Parametrization of the smooth surface.

    `embed` maps (m, d) parameters to (m, 3) points and `sample` draws (n, d)
    parameters; `check_sample` draws parameters away from creases and ends.
    """

    dim: int
    embed: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[Any, int], np.ndarray]
    check_sample: Optional[Callable[[Any, int], np.ndarray]] = None


@dataclass(frozen=True)
class SceneSpec:
    id: str
    description: str
    scene: SurfaceScene
    boundary: Optional[DirichletBoundary]
    pde: str
    chart: Chart
    sigma: float = 0.0
    source_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    solution: Optional[Callable[[np.ndarray], np.ndarray]] = None
    solver_overrides: Dict[str, Any] = field(default_factory=dict)
    tessellation: Tessellation = Tessellation()

    @property
    def source(self):
        if self.source_fn is None:
            return SourceTerm.none()
        return SourceTerm.scalar(self.source_fn)

    @property
    def has_solution(self):
        return self.solution is not None

    def solver_config(self, **overrides):
        """Scene defaults (N_V = 0 for Laplace, σ, step limit, pruning scale) under `overrides`."""
        settings = {"n_volume": 0 if self.pde == "laplace" else 32, "sigma": self.sigma}
        settings.update(self.solver_overrides)
        settings.update({k: v for k, v in overrides.items() if v is not None})
        settings["sigma"] = self.sigma
        return SolverConfig(**settings)

    def sample_probes(self, n, rng):
        """
        n probe points on the smooth surface and their reference values.

        :return: (points (n, 3), reference (n,) or None).
        """
        points = self.chart.embed(self.chart.sample(rng, n))
        reference = self.solution(points) if self.solution is not None else None
        return points, reference


def spherical_harmonic(points):
    """Y = (1/4)√(105/π)(x1² - x2²)x3 on the unit sphere, evaluated at the radial projection."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    return Y_SCALE * (p[:, 0] ** 2 - p[:, 1] ** 2) * p[:, 2]


def punch(points):
    """Reflect the cap above x3 = 0.25 to x3' = 0.5 - x3."""
    p = np.array(points, dtype=float).reshape(-1, 3)
    cap = p[:, 2] > PUNCH_HEIGHT
    p[cap, 2] = 2.0 * PUNCH_HEIGHT - p[cap, 2]
    return p


def unpunch(points):
    """Inverse of `punch` for points on (or near) the punched sphere."""
    p = np.array(points, dtype=float).reshape(-1, 3)
    reflected = p.copy()
    reflected[:, 2] = 2.0 * PUNCH_HEIGHT - p[:, 2]
    direct_err = np.abs(np.linalg.norm(p, axis=1) - 1.0)
    reflected_err = np.abs(np.linalg.norm(reflected, axis=1) - 1.0)
    use_reflected = (reflected_err < direct_err) & (p[:, 2] < PUNCH_HEIGHT)
    p[use_reflected] = reflected[use_reflected]
    return p


def _sphere_embed(q):
    theta, phi = q[:, 0], q[:, 1]
    return np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _sphere_sample(rng, n):
    z = rng.uniform(-1.0, 1.0, n)
    return np.column_stack([np.arccos(z), rng.uniform(0.0, 2.0 * np.pi, n)])


def _sphere_check_sample(rng, n):
    return np.column_stack([rng.uniform(0.2, np.pi - 0.2, n), rng.uniform(0.0, 2.0 * np.pi, n)])


def _closed_polyline(points):
    n = len(points)
    return np.column_stack([np.arange(n), (np.arange(n) + 1) % n])


def _open_polyline(n):
    return np.column_stack([np.arange(n - 1), np.arange(1, n)])


def _grid_triangles(nu, nv, wrap_u=False, wrap_v=False):
    """Triangles of an nu × nv vertex grid (row-major in u), optionally periodic."""
    cu = nu if wrap_u else nu - 1
    cv = nv if wrap_v else nv - 1
    i, j = np.meshgrid(np.arange(cu), np.arange(cv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * nv + j
    b = ((i + 1) % nu) * nv + j
    c = ((i + 1) % nu) * nv + (j + 1) % nv
    d = i * nv + (j + 1) % nv
    return np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


@lru_cache(maxsize=8)
def _icosphere(subdivisions):
    mesh = trimesh.creation.icosphere(subdivisions=subdivisions, radius=1.0)
    return np.asarray(mesh.vertices, dtype=float), np.asarray(mesh.faces, dtype=np.intp)


def _equator(n):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.column_stack([np.cos(t), np.sin(t), np.zeros(n)])


# Curves


def _helix_embed(q):
    tau = q[:, 0]
    angle = 2.0 * np.pi * HELIX_TURNS * tau
    return np.column_stack([np.cos(angle), np.sin(angle), 2.0 * tau - 1.0])


HELIX_LENGTH = float(np.sqrt((2.0 * np.pi * HELIX_TURNS) ** 2 + 4.0))


def _helix(spec_id, tess):
    n = tess.curve_segments
    vertices = _helix_embed(np.linspace(0.0, 1.0, n + 1)[:, None])
    scene = SurfaceScene(vertices, segments=_open_polyline(n + 1))
    boundary = DirichletBoundary(vertices[[0, -1]], np.array([0.0, 1.0]))
    chart = Chart(
        dim=1,
        embed=_helix_embed,
        sample=lambda rng, m: rng.random((m, 1)),
        check_sample=lambda rng, m: rng.uniform(0.01, 0.99, (m, 1)),
    )
    psi = HELIX_LENGTH

    def arc(points):
        return psi * (np.asarray(points).reshape(-1, 3)[:, 2] + 1.0) / 2.0

    if spec_id == "a":
        return SceneSpec(
            id="a",
            description="Helix, Laplace, u linear in arc length.",
            scene=scene,
            boundary=boundary,
            pde="laplace",
            chart=chart,
            solution=lambda p: arc(p) / psi,
            tessellation=tess,
        )
    return SceneSpec(
        id="b",
        description="Helix, Poisson with constant source 0.02.",
        scene=scene,
        boundary=boundary,
        pde="poisson",
        chart=chart,
        source_fn=lambda p: np.full(len(np.asarray(p).reshape(-1, 3)), 0.02),
        solution=lambda p: _quadratic_in_arc(arc(p), psi),
        tessellation=tess,
    )


def _quadratic_in_arc(phi, psi):
    return 0.01 * phi**2 + ((1.0 - 0.01 * psi**2) / psi) * phi


def z_order_corners():
    """The corners (±1, ±1, ±1) in z-order (x varies fastest)."""
    return np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], dtype=float)


def polyline_arc_length(corners, points):
    """Arc length of the closest point on the open polyline through `corners`."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    a, b = corners[:-1], corners[1:]
    d = b - a
    lengths = np.linalg.norm(d, axis=1)
    offsets = np.concatenate([[0.0], np.cumsum(lengths)])
    t = np.einsum("mkj,kj->mk", p[:, None, :] - a[None], d) / lengths**2
    t = np.clip(t, 0.0, 1.0)
    closest = a[None] + t[..., None] * d[None]
    j = np.argmin(np.linalg.norm(p[:, None, :] - closest, axis=2), axis=1)
    rows = np.arange(len(p))
    return offsets[j] + t[rows, j] * lengths[j]


def _z_order(spec_id, tess):
    corners = z_order_corners()
    lengths = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    offsets = np.concatenate([[0.0], np.cumsum(lengths)])
    psi = float(offsets[-1])
    counts = np.maximum(1, np.round(tess.curve_segments * lengths / psi).astype(int))
    pieces = [
        corners[k] + np.linspace(0.0, 1.0, counts[k], endpoint=False)[:, None] * (corners[k + 1] - corners[k])
        for k in range(len(lengths))
    ]
    vertices = np.concatenate(pieces + [corners[-1:]])
    scene = SurfaceScene(vertices, segments=_open_polyline(len(vertices)))
    boundary = DirichletBoundary(vertices[[0, -1]], np.array([0.0, 1.0]))

    def embed(q):
        phi = np.clip(q[:, 0], 0.0, psi)
        k = np.clip(np.searchsorted(offsets, phi, side="right") - 1, 0, len(lengths) - 1)
        frac = (phi - offsets[k]) / lengths[k]
        return corners[k] + frac[:, None] * (corners[k + 1] - corners[k])

    def away_from_corners(rng, m):
        out = np.empty(0)
        while len(out) < m:
            phi = rng.uniform(0.0, psi, 2 * m)
            gap = np.min(np.abs(phi[:, None] - offsets[None]), axis=1)
            out = np.concatenate([out, phi[gap > 0.02]])
        return out[:m, None]

    scale = 1.15 if spec_id == "c" else 1.05
    return SceneSpec(
        id=spec_id,
        description=f"Z-order polyline, Poisson, pruning scale {scale}.",
        scene=scene,
        boundary=boundary,
        pde="poisson",
        chart=Chart(
            dim=1,
            embed=embed,
            sample=lambda rng, m: rng.uniform(0.0, psi, (m, 1)),
            check_sample=away_from_corners,
        ),
        source_fn=lambda p: np.full(len(np.asarray(p).reshape(-1, 3)), 0.02),
        solution=lambda p: _quadratic_in_arc(polyline_arc_length(corners, p), psi),
        solver_overrides={"scale_axis_s": scale},
        tessellation=tess,
    )


def _circle_angle(points):
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.mod(np.arctan2(p[:, 1], p[:, 0]) - THETA_C, 2.0 * np.pi)


def _circle(tess):
    n = tess.curve_segments
    vertices = _equator(n)
    scene = SurfaceScene(vertices, segments=_closed_polyline(vertices))
    pc = np.array([[np.cos(THETA_C), np.sin(THETA_C), 0.0]])
    orientation = np.array([[-np.sin(THETA_C), np.cos(THETA_C), 0.0]])
    boundary = DirichletBoundary(pc, np.array([2.0]), values_other=np.array([22.0]), orientations=orientation)

    def embed(q):
        return _equator_at(q[:, 0])

    return SceneSpec(
        id="e",
        description="Unit circle, Poisson, two-sided point boundary at 1.022π.",
        scene=scene,
        boundary=boundary,
        pde="poisson",
        chart=Chart(
            dim=1,
            embed=embed,
            sample=lambda rng, m: rng.uniform(0.0, 2.0 * np.pi, (m, 1)),
            check_sample=lambda rng, m: THETA_C + rng.uniform(0.05, 2.0 * np.pi - 0.05, (m, 1)),
        ),
        source_fn=lambda p: -2.0 * np.cos(_circle_angle(p)),
        solution=lambda p: 2.0 * np.cos(_circle_angle(p)) + (10.0 / np.pi) * _circle_angle(p),
        tessellation=tess,
    )


def _equator_at(t):
    return np.column_stack([np.cos(t), np.sin(t), np.zeros(len(t))])


# Surfaces


def _torus_embed(q):
    a, b = q[:, 0], q[:, 1]
    ring = TORUS_R + TORUS_r * np.cos(b)
    return np.column_stack([ring * np.cos(a), ring * np.sin(a), TORUS_r * np.sin(b)])


def _torus(tess):
    nb = max(8, int(round(np.sqrt(tess.grid_cells / TORUS_R))))
    na = max(8, int(round(TORUS_R * nb)))
    a, b = np.meshgrid(
        np.linspace(0.0, 2.0 * np.pi, na, endpoint=False),
        np.linspace(0.0, 2.0 * np.pi, nb, endpoint=False),
        indexing="ij",
    )
    vertices = _torus_embed(np.column_stack([a.ravel(), b.ravel()]))
    scene = SurfaceScene(vertices, triangles=_grid_triangles(na, nb, wrap_u=True, wrap_v=True))
    s = np.linspace(0.0, 2.0 * np.pi, tess.curve_segments, endpoint=False)
    knot = _torus_embed(np.column_stack([KNOT_P * s, KNOT_Q * s]))
    boundary = DirichletBoundary(knot, np.sin(s), segments=_closed_polyline(knot))
    return SceneSpec(
        id="f",
        description="Torus (R=3, r=1), Laplace, (3, 7) torus-knot boundary carrying sin(s).",
        scene=scene,
        boundary=boundary,
        pde="laplace",
        chart=Chart(dim=2, embed=_torus_embed, sample=lambda rng, m: rng.uniform(0.0, 2.0 * np.pi, (m, 2))),
        tessellation=tess,
    )


ELLIPSOID_HESSIAN = np.array([[2.0, 0.0, -2.0], [0.0, 2.0, 0.0], [-2.0, 0.0, 4.0]])


def ellipsoid_map(points):
    """(a, b, c) -> (a + c, b, c): the unit sphere onto (x1 - x3)² + x2² + x3² = 1."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack([p[:, 0] + p[:, 2], p[:, 1], p[:, 2]])


def ellipsoid_laplacian_x1x2(points):
    """Laplace-Beltrami of u = x1 x2 on the level sets of (x1 - x3)² + x2² + x3²."""
    x = np.asarray(points, dtype=float).reshape(-1, 3)
    grad = np.column_stack([2.0 * (x[:, 0] - x[:, 2]), 2.0 * x[:, 1], -2.0 * (x[:, 0] - x[:, 2]) + 2.0 * x[:, 2]])
    norm = np.linalg.norm(grad, axis=1)
    n = grad / norm[:, None]
    curvature = (np.trace(ELLIPSOID_HESSIAN) - np.einsum("ij,jk,ik->i", n, ELLIPSOID_HESSIAN, n)) / norm
    return -2.0 * n[:, 0] * n[:, 1] - curvature * (x[:, 1] * n[:, 0] + x[:, 0] * n[:, 1])


def _x1x2(points):
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return p[:, 0] * p[:, 1]


def _ellipsoid(spec_id, tess):
    sphere_vertices, faces = _icosphere(tess.sphere_subdivisions)
    vertices = ellipsoid_map(sphere_vertices)
    scene = SurfaceScene(vertices, triangles=faces)
    boundary = None
    overrides = {}
    if spec_id == "g":
        circle = _equator(tess.curve_segments)
        boundary = DirichletBoundary(circle, _x1x2(circle), segments=_closed_polyline(circle))
    else:
        overrides = {"max_steps": 100_000}
    return SceneSpec(
        id=spec_id,
        description="Ellipsoid, screened (σ=1), u = x1 x2"
        + (", unit circle boundary." if spec_id == "g" else ", no boundary."),
        scene=scene,
        boundary=boundary,
        pde="screened",
        sigma=1.0,
        chart=Chart(
            dim=2,
            embed=lambda q: ellipsoid_map(_sphere_embed(q)),
            sample=_sphere_sample,
            check_sample=_sphere_check_sample,
        ),
        source_fn=lambda p: ellipsoid_laplacian_x1x2(p) - _x1x2(p),
        solution=_x1x2,
        solver_overrides=overrides,
        tessellation=tess,
    )


_SPHERE_LAYOUT = {
    "i": ("poisson", "equator", False),
    "j": ("poisson", "semicircle", False),
    "k": ("screened", "equator", False),
    "l": ("screened", None, False),
    "m": ("poisson", "equator", True),
    "n": ("poisson", "semicircle", True),
    "o": ("screened", "equator", True),
    "p": ("screened", None, True),
}


def _punched_check_sample(rng, m):
    out = np.empty((0, 2))
    while len(out) < m:
        q = _sphere_check_sample(rng, 2 * m)
        out = np.concatenate([out, q[np.abs(np.cos(q[:, 0]) - PUNCH_HEIGHT) > 0.05]])
    return out[:m]


def _sphere(spec_id, tess):
    pde, boundary_kind, punched = _SPHERE_LAYOUT[spec_id]
    vertices, faces = _icosphere(tess.sphere_subdivisions)
    if punched:
        vertices = punch(vertices)
    scene = SurfaceScene(vertices, triangles=faces)

    boundary = None
    if boundary_kind == "equator":
        curve = _equator(tess.curve_segments)
        boundary = DirichletBoundary(curve, np.zeros(len(curve)), segments=_closed_polyline(curve))
    elif boundary_kind == "semicircle":
        curve = _equator_at(np.linspace(0.0, np.pi, tess.curve_segments // 2 + 1))
        boundary = DirichletBoundary(curve, np.zeros(len(curve)), segments=_open_polyline(len(curve)))

    if punched:
        solution = lambda p: spherical_harmonic(unpunch(p))  # noqa: E731
        embed = lambda q: punch(_sphere_embed(q))  # noqa: E731
        check = _punched_check_sample
    else:
        solution = spherical_harmonic
        embed = _sphere_embed
        check = _sphere_check_sample

    sigma = 1.0 if pde == "screened" else 0.0
    factor = -13.0 if pde == "screened" else -12.0
    surface = "Punched sphere" if punched else "Unit sphere"
    where = {"equator": "equator boundary", "semicircle": "semicircle boundary", None: "no boundary"}
    return SceneSpec(
        id=spec_id,
        description=f"{surface}, {pde}, {where[boundary_kind]}.",
        scene=scene,
        boundary=boundary,
        pde=pde,
        sigma=sigma,
        chart=Chart(dim=2, embed=embed, sample=_sphere_sample, check_sample=check),
        source_fn=lambda p: factor * solution(p),
        solution=solution,
        solver_overrides={"max_steps": 100_000} if boundary is None else {},
        tessellation=tess,
    )


def strip_arc_length(x, omega, amplitude=STRIP_AMPLITUDE):
    """Arc length of t -> (t, A sin ωt) from 0 to x, via the incomplete elliptic integral."""
    k2 = (amplitude * omega) ** 2
    return np.sqrt(1.0 + k2) / omega * special.ellipeinc(omega * np.asarray(x, dtype=float), k2 / (1.0 + k2))


def _strip(spec_id, tess):
    omega = STRIP_FREQUENCIES[spec_id]
    x_end = optimize.brentq(lambda x: strip_arc_length(x, omega) - STRIP_LENGTH, 0.0, STRIP_LENGTH)
    nw = max(2, int(round(np.sqrt(tess.grid_cells / 5.0))))
    nx = 5 * nw
    # Vertices uniform in arc length.
    s_grid = np.linspace(0.0, STRIP_LENGTH, nx + 1)
    x_grid = np.array(
        [optimize.brentq(lambda x, s=s: strip_arc_length(x, omega) - s, -1e-9, x_end + 1e-9) for s in s_grid]
    )
    w_grid = np.linspace(-0.5 * STRIP_WIDTH, 0.5 * STRIP_WIDTH, nw + 1)
    X, W = np.meshgrid(x_grid, w_grid, indexing="ij")

    def embed(q):
        return np.column_stack([q[:, 0], q[:, 1], STRIP_AMPLITUDE * np.sin(omega * q[:, 0])])

    vertices = embed(np.column_stack([X.ravel(), W.ravel()]))
    scene = SurfaceScene(vertices, triangles=_grid_triangles(nx + 1, nw + 1))
    m = nw + 1
    near = np.arange(m)
    far = nx * m + np.arange(m)
    boundary_vertices = np.concatenate([vertices[near], vertices[far]])
    segments = np.concatenate([_open_polyline(m), m + _open_polyline(m)])
    values = np.concatenate([np.zeros(m), np.full(m, STRIP_LENGTH)])
    boundary = DirichletBoundary(boundary_vertices, values, segments=segments)

    def sample(rng, n):
        return np.column_stack([rng.uniform(0.0, x_end, n), rng.uniform(-1.0, 1.0, n)])

    level = spec_id.split("_")[1]
    return SceneSpec(
        id=spec_id,
        description=f"10 x 2 strip bent along a sinusoid ({level} frequency), Laplace, u = arc length.",
        scene=scene,
        boundary=boundary,
        pde="laplace",
        chart=Chart(dim=2, embed=embed, sample=sample),
        solution=lambda p: strip_arc_length(np.asarray(p).reshape(-1, 3)[:, 0], omega),
        tessellation=tess,
    )


def bend_onto_cylinder(xy):
    """Isometric map of the plane onto the unit cylinder around the y axis."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return np.column_stack([np.sin(xy[:, 0]), xy[:, 1], 1.0 - np.cos(xy[:, 0])])


def disk_coordinates(points):
    """Intrinsic (x, y) of points on the bent disk."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack([np.arctan2(p[:, 0], 1.0 - p[:, 2]), p[:, 1]])


def _disk_solution(points):
    xy = disk_coordinates(points)
    x, y = xy[:, 0], xy[:, 1]
    return 3.0 * x**2 * y - y**3


def _disk(tess):
    n = tess.disk_points
    ring_count = max(16, int(round(2.0 * np.pi * np.sqrt(n / np.pi))))
    spacing = 2.0 * np.pi / ring_count
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(n)
    rho = np.sqrt((i + 0.5) / n) * (1.0 - 0.5 * spacing)
    interior = np.column_stack([rho * np.cos(golden * i), rho * np.sin(golden * i)])
    theta = np.arange(ring_count) * spacing
    ring = np.column_stack([np.cos(theta), np.sin(theta)])
    flat = np.concatenate([ring, interior])
    triangles = Delaunay(flat).simplices
    vertices = bend_onto_cylinder(flat)
    scene = SurfaceScene(vertices, triangles=triangles)
    ring_points = vertices[:ring_count]
    boundary = DirichletBoundary(
        ring_points, np.sin(3.0 * theta), segments=_closed_polyline(ring_points)
    )

    def sample(rng, m):
        r = np.sqrt(rng.random(m))
        t = rng.uniform(0.0, 2.0 * np.pi, m)
        return np.column_stack([r * np.cos(t), r * np.sin(t)])

    return SceneSpec(
        id="disk",
        description="Unit disk bent onto a cylinder, Laplace, u = ρ³ sin 3θ.",
        scene=scene,
        boundary=boundary,
        pde="laplace",
        chart=Chart(
            dim=2,
            embed=bend_onto_cylinder,
            sample=sample,
            check_sample=lambda rng, m: 0.9 * sample(rng, m),
        ),
        solution=_disk_solution,
        tessellation=tess,
    )


SCENE_IDS = tuple("abcdefghijklmnop") + ("strip_high", "strip_mid", "strip_low", "disk")


@lru_cache(maxsize=32)
def builtin_scene(scene_id, tessellation=None):
    """
    Build a builtin scene.

    :param scene_id: One of SCENE_IDS.
    :param tessellation: Optional Tessellation; defaults to the fine densities.
    :return: SceneSpec.
    """
    tess = tessellation or Tessellation()
    if scene_id in ("a", "b"):
        spec = _helix(scene_id, tess)
    elif scene_id in ("c", "d"):
        spec = _z_order(scene_id, tess)
    elif scene_id == "e":
        spec = _circle(tess)
    elif scene_id == "f":
        spec = _torus(tess)
    elif scene_id in ("g", "h"):
        spec = _ellipsoid(scene_id, tess)
    elif scene_id in _SPHERE_LAYOUT:
        spec = _sphere(scene_id, tess)
    elif scene_id in STRIP_FREQUENCIES:
        spec = _strip(scene_id, tess)
    elif scene_id == "disk":
        spec = _disk(tess)
    else:
        raise SceneError(f"Unknown scene id: {scene_id!r}")
    harness_logger.info("Built scene %s (%d vertices).", scene_id, spec.scene.vertex_count)
    return spec


def describe_scenes():
    """Id and description of every builtin scene, without building meshes."""
    return [{"id": scene_id, "description": _DESCRIPTIONS[scene_id]} for scene_id in SCENE_IDS]


_DESCRIPTIONS = {
    "a": "Helix, Laplace.",
    "b": "Helix, Poisson with constant source.",
    "c": "Z-order polyline, Poisson, pruning scale 1.15.",
    "d": "Z-order polyline, Poisson, pruning scale 1.05.",
    "e": "Unit circle, Poisson, two-sided point boundary.",
    "f": "Torus with a torus-knot boundary, Laplace (self reference).",
    "g": "Ellipsoid, screened, unit circle boundary.",
    "h": "Ellipsoid, screened, no boundary.",
    "i": "Unit sphere, Poisson, equator boundary.",
    "j": "Unit sphere, Poisson, semicircle boundary.",
    "k": "Unit sphere, screened, equator boundary.",
    "l": "Unit sphere, screened, no boundary.",
    "m": "Punched sphere, Poisson, equator boundary.",
    "n": "Punched sphere, Poisson, semicircle boundary.",
    "o": "Punched sphere, screened, equator boundary.",
    "p": "Punched sphere, screened, no boundary.",
    "strip_high": "Bent strip, high frequency, Laplace.",
    "strip_mid": "Bent strip, mid frequency, Laplace.",
    "strip_low": "Bent strip, low frequency, Laplace.",
    "disk": "Curved unit disk, Laplace, u = ρ³ sin 3θ.",
}


@lru_cache(maxsize=32)
def _cached_atlas(scene_id, tessellation, seed, seed_count, scale_axis_s, lam):
    spec = builtin_scene(scene_id, tessellation)
    cfg = SolverConfig(seed=seed, seed_count=seed_count, scale_axis_s=scale_axis_s, lambda_=lam)
    return build_atlas(spec.scene, cfg)


def scene_atlas(spec, cfg):
    """Medial atlas of a builtin scene, shared between runs with the same atlas settings."""
    return _cached_atlas(spec.id, spec.tessellation, cfg.seed, cfg.seed_count, cfg.scale_axis_s, cfg.lambda_)


def surface_laplacian(chart, u, q, h=1e-3):
    """
    Finite-difference Laplace-Beltrami of u ∘ embed at parameters q (m, d).

    (1/√g) ∂_i(√g g^{ij} ∂_j u) with nested central differences.
    """
    q = np.asarray(q, dtype=float).reshape(-1, chart.dim)
    steps = h * np.eye(chart.dim)

    def flux(q0):
        J = np.stack([(chart.embed(q0 + e) - chart.embed(q0 - e)) / (2.0 * h) for e in steps], axis=2)
        du = np.column_stack([(u(chart.embed(q0 + e)) - u(chart.embed(q0 - e))) / (2.0 * h) for e in steps])
        g = np.einsum("mki,mkj->mij", J, J)
        sqrt_g = np.sqrt(np.linalg.det(g))
        return sqrt_g[:, None] * np.linalg.solve(g, du[..., None])[..., 0], sqrt_g

    _, sqrt_g = flux(q)
    divergence = sum((flux(q + e)[0][:, i] - flux(q - e)[0][:, i]) / (2.0 * h) for i, e in enumerate(steps))
    return divergence / sqrt_g


def check_scene(spec, n=100, rng=None):
    """
    Relative residual of Δu - σu = f at n chart parameters.

    :return: max |Δu - σu - f| / max(max |f|, max |u|, 1); None without an analytic solution.
    """
    if spec.solution is None:
        return None
    rng = rng if rng is not None else np.random.default_rng(0)
    sampler = spec.chart.check_sample or spec.chart.sample
    q = sampler(rng, n)
    points = spec.chart.embed(q)
    u = spec.solution(points)
    f = spec.source_fn(points) if spec.source_fn is not None else np.zeros(len(points))
    residual = surface_laplacian(spec.chart, spec.solution, q) - spec.sigma * u - f
    scale = max(float(np.abs(f).max()), float(np.abs(u).max()), 1.0)
    return float(np.abs(residual).max() / scale)
