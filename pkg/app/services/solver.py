"""
Projected walk on spheres.

Walkers for one evaluation point advance in lockstep: every step locates the
closest boundary point, computes the distance to the boundary extended along the
surface normals (or, on curves, into the normal disk), terminates inside the
ε-shell, otherwise adds the volume source term of the largest admissible ball,
applies Russian roulette for screened problems and jumps to a uniform sphere
sample projected back onto the surface.

Classes:
- SolverConfig: Walk parameters (pydantic model).
- SourceTerm: None, scalar field f or divergence field h (f = ∇·h).
- WalkContext: Scene, boundary, feature size provider, config, source and ε-shell width.
- Estimate: Mean, standard error and walk statistics.

Functions:
- build_atlas, extended_boundary_distance, distance_to_extended_boundary, locate_step,
  volume_terms, volume_gradient_terms, volume_term, walk_once, estimate_solution,
  estimate_gradient, estimate_many, estimate_batch, point_rng.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import DEFAULT_SEED, DEFAULT_THREADS
from app.errors import SolverConfigError
from app.services import kernels
from app.services.geometry import POINT, project_tangent
from app.services.medial import extract_atlas, termination_tolerance
from app.utils import get_logger

solver_logger = get_logger("solver_logger", "solver.log")

# RNG stream tags combined with (seed, point index).
STREAM_SOLUTION = 0
STREAM_GRADIENT = 1
STREAM_FILTER = 2
STREAM_MEDIAL = 3


class SolverConfig(BaseModel):
    """
    Parameters of the walk and of the medial atlas it relies on.

    `lambda_` (alias "lambda") is the local feature size floor; None selects 1% of
    the scene diagonal.
    """

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    epsilon: float = Field(default=1e-3, gt=0)
    n_volume: int = Field(default=32, ge=0)
    n_paths: int = Field(default=128, ge=1)
    lambda_: Optional[float] = Field(default=None, alias="lambda", gt=0)
    sigma: float = Field(default=0.0, ge=0)
    max_steps: int = Field(default=10_000, ge=1)
    radius_cap: Optional[float] = None
    seed: int = DEFAULT_SEED
    scale_axis_s: float = Field(default=1.15, gt=1)
    seed_count: int = Field(default=100_000, ge=1)
    threads: int = Field(default=DEFAULT_THREADS, ge=1)
    screened_mode: Literal["roulette", "weighted"] = "roulette"

    @field_validator("seed")
    @classmethod
    def seed_fits_64_bits(cls, value):
        if not 0 <= value < 2**64:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        return value

    @model_validator(mode="after")
    def cap_above_epsilon(self):
        if self.radius_cap is not None and self.radius_cap <= self.epsilon:
            raise ValueError("radius_cap must be greater than epsilon")
        return self


@dataclass(frozen=True)
class SourceTerm:
    """
    Right-hand side of the PDE.

    `fn` maps a ClosestPointBatch of projected volume samples to f (shape (m,)) for
    scalar fields or to h (shape (m, 3)) for divergence fields.
    """

    kind: str = "none"
    fn: Optional[Callable[[Any], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("none", "scalar_field", "divergence_field"):
            raise SolverConfigError(f"Unknown source kind: {self.kind}")
        if self.kind != "none" and self.fn is None:
            raise SolverConfigError("A source term needs an evaluation function.")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def scalar(cls, f):
        """Scalar source from a function of (m, 3) surface points."""
        return cls("scalar_field", lambda batch: np.asarray(f(batch.points), dtype=float))

    @classmethod
    def divergence(cls, h):
        """Divergence source ∇·h from a function of (m, 3) surface points returning (m, 3)."""
        return cls("divergence_field", lambda batch: np.asarray(h(batch.points), dtype=float))

    @classmethod
    def interpolated(cls, scene, vertex_values, renormalize=False):
        """
        Source interpolated from per-vertex values with the scene's basis.

        (n,) values give a scalar field, (n, 3) values a divergence field; with
        `renormalize` the interpolated vectors are scaled back to unit length.
        """
        values = np.asarray(vertex_values, dtype=float)
        if values.ndim == 2 and values.shape[1] == 3:

            def h(batch):
                out = scene.interpolate(batch, values)
                if renormalize:
                    norms = np.linalg.norm(out, axis=1, keepdims=True)
                    out = np.divide(out, norms, out=np.zeros_like(out), where=norms > 0)
                return out

            return cls("divergence_field", h)
        return cls("scalar_field", lambda batch: scene.interpolate(batch, values))

    def __call__(self, batch):
        return self.fn(batch)


def shell_width(scene, epsilon):
    """
    Width of the termination shell.

    Closest points on an oriented point cloud snap to sample vertices, so walks
    could never get closer to the boundary than the sample spacing. Scenes with
    two or more point primitives use max(ε, medial termination tolerance).
    """
    if scene is None or (scene.primitive_kinds() == POINT).sum() < 2:
        return epsilon
    return max(epsilon, termination_tolerance(scene))


@dataclass(frozen=True)
class WalkContext:
    """
    Everything a walk reads. `feature_size` is a MedialAtlas or a ConstantFeatureSize.
    `shell` is derived from the scene and ε.
    """

    scene: Any
    boundary: Any
    feature_size: Any
    config: SolverConfig
    source: SourceTerm = SourceTerm()
    shell: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.source.kind == "divergence_field" and self.config.sigma > 0:
            raise SolverConfigError("Divergence sources are only supported for sigma = 0.")
        object.__setattr__(self, "shell", shell_width(self.scene, self.config.epsilon))

    @property
    def channels(self):
        return self.boundary.channels if self.boundary is not None else 1


class Estimate(BaseModel):
    """Monte Carlo estimate at one evaluation point."""

    mean: Union[float, List[float]]
    std_error: Union[float, List[float]]
    n_paths: int
    avg_steps: float
    max_steps_hit: int

    def value(self):
        return np.asarray(self.mean, dtype=float)

    def error(self):
        return np.asarray(self.std_error, dtype=float)


def point_rng(seed, point_index, stream=STREAM_SOLUTION):
    """Independent generator for (seed, evaluation point, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(point_index), int(stream)]))


def build_atlas(scene, config):
    """Medial atlas of `scene` with the seed count, pruning scale and floor of `config`."""
    rng = point_rng(config.seed, 0, STREAM_MEDIAL)
    return extract_atlas(scene, config.seed_count, config.scale_axis_s, config.lambda_, rng)


def extended_boundary_distance(rvec, direction, l, patch_dim):
    """
    Distance from points to the boundary extended along the closest point map.

    On surfaces (patch_dim 2) the extension of a boundary point c is the segment
    c + s n, |s| <= l; on curves (patch_dim 1) it is the disk of radius l centered
    at c and orthogonal to the tangent t.

    :param rvec: (m, 3) offsets x - c.
    :param direction: (m, 3) surface normal n (surfaces) or curve tangent t (curves) at c.
    :param l: (m,) local feature size at c.
    :param patch_dim: (m,) surface patch dimension at c.
    :return: (m,) distances δ.
    """
    rvec = np.asarray(rvec, dtype=float).reshape(-1, 3)
    direction = np.asarray(direction, dtype=float).reshape(-1, 3)
    l = np.broadcast_to(np.asarray(l, dtype=float), (len(rvec),))
    patch_dim = np.broadcast_to(np.asarray(patch_dim), (len(rvec),))
    along = np.einsum("ij,ij->i", rvec, direction)
    radial = rvec - along[:, None] * direction

    segment = np.linalg.norm(rvec - np.clip(along, -l, l)[:, None] * direction, axis=1)

    radial_norm = np.linalg.norm(radial, axis=1)
    disk = np.where(
        radial_norm <= l, np.abs(along), np.hypot(along, np.maximum(radial_norm - l, 0.0))
    )
    return np.where(patch_dim == 1, disk, segment)


@dataclass(frozen=True)
class StepGeometry:
    """
    Per-position quantities of one walk step.

    `terminal` marks positions inside the ε-shell; `values` holds their boundary
    values (rows of other positions are unused).
    """

    radius: np.ndarray
    delta: np.ndarray
    terminal: np.ndarray
    values: Optional[np.ndarray]


def locate_step(ctx, X):
    """Boundary distance, ε-shell test and sphere radius r = min(l, δ, cap) at (m, 3) positions."""
    cfg = ctx.config
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    if ctx.boundary is None:
        delta = np.full(len(X), np.inf)
        values = None
    else:
        located = ctx.boundary.locate(X, scene=ctx.scene)
        l_boundary = ctx.feature_size.local_feature_size(located.hits.points)
        delta = extended_boundary_distance(
            X - located.hits.points,
            located.surface_frames,
            l_boundary,
            located.surface_patch_dims,
        )
        values = located.values
    terminal = delta < ctx.shell
    radius = np.minimum(ctx.feature_size.local_feature_size(X), delta)
    if cfg.radius_cap is not None:
        radius = np.minimum(radius, cfg.radius_cap)
    return StepGeometry(radius=radius, delta=delta, terminal=terminal, values=values)


def distance_to_extended_boundary(ctx, x):
    """δ at a single position; +inf without a boundary."""
    return float(locate_step(ctx, x).delta[0])


def volume_terms(ctx, X, radii, rng):
    """
    Source contribution of the balls B(X_i, r_i), one N_V-sample estimate each.

    :return: (m,) values.
    """
    cfg = ctx.config
    m = len(X)
    n_v = cfg.n_volume
    if ctx.source.kind == "none" or n_v == 0 or m == 0:
        return np.zeros(m)
    centers = np.repeat(X, n_v, axis=0)
    r = np.repeat(radii, n_v)
    if ctx.source.kind == "scalar_field":
        samples = kernels.sample_ball_inv_distance(rng, centers, r)
        projected = ctx.scene.closest_points(samples.points)
        f = np.asarray(ctx.source(projected), dtype=float).reshape(-1)
        g = kernels.center_kernel(samples.offsets, r, cfg.sigma).value
        terms = g * f / samples.pdf
    else:
        samples = kernels.sample_ball_inv_sq(rng, centers, r)
        projected = ctx.scene.closest_points(samples.points)
        h = np.asarray(ctx.source(projected), dtype=float).reshape(-1, 3)
        # ∇_z G(x, z) equals ∇ of G(·, x) at z by symmetry, x at the ball origin.
        grad_z = kernels.grad_green_poisson_offcenter(samples.offsets, np.zeros_like(samples.offsets), r)
        terms = -np.einsum("ij,ij->i", h, grad_z) / samples.pdf
    return terms.reshape(m, n_v).mean(axis=1)


def volume_gradient_terms(ctx, X, radii, rng):
    """
    Source contribution to the gradient at the centers of B(X_i, r_i).

    Samples are drawn with density ∝ 1/ρ², which cancels the singularity of ∇G.

    :return: (m, 3) vectors; zero without a scalar source or with N_V = 0.
    """
    cfg = ctx.config
    m = len(X)
    n_v = cfg.n_volume
    if ctx.source.kind != "scalar_field" or n_v == 0 or m == 0:
        return np.zeros((m, 3))
    centers = np.repeat(X, n_v, axis=0)
    r = np.repeat(radii, n_v)
    samples = kernels.sample_ball_inv_sq(rng, centers, r)
    f = np.asarray(ctx.source(ctx.scene.closest_points(samples.points)), dtype=float).reshape(-1)
    grad = kernels.center_kernel(samples.offsets, r, cfg.sigma, gradient=True).gradient
    return (grad * (f / samples.pdf)[:, None]).reshape(m, n_v, 3).mean(axis=1)


def volume_term(ctx, x, r, rng):
    """N_V-sample source term of the ball B(x, r); 0 without a source or with N_V = 0."""
    if r <= 0:
        raise SolverConfigError("Ball radius must be positive.")
    return float(volume_terms(ctx, np.asarray(x, dtype=float).reshape(1, 3), np.array([r]), rng)[0])


def _run_walks(ctx, starts, rng):
    """
    Advance one walker per start position until all terminate.

    :return: (values (n, C), steps (n,), truncated mask (n,)).
    """
    cfg = ctx.config
    n = len(starts)
    pos = np.array(starts, dtype=float)
    acc = np.zeros((n, ctx.channels))
    weight = np.ones(n)
    steps = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    screened = cfg.sigma > 0

    for _ in range(cfg.max_steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        x = pos[idx]
        steps[idx] += 1
        geo = locate_step(ctx, x)

        if geo.values is not None and geo.terminal.any():
            done = idx[geo.terminal]
            acc[done] += weight[done, None] * geo.values[geo.terminal]
            alive[done] = False
        keep = ~geo.terminal
        idx, x, r = idx[keep], x[keep], geo.radius[keep]
        if len(idx) == 0:
            break

        acc[idx] += (weight[idx] * volume_terms(ctx, x, r, rng))[:, None]

        if screened:
            c = kernels.screened_weight(r, cfg.sigma)
            if cfg.screened_mode == "roulette":
                survive = rng.random(len(idx)) < c
                alive[idx[~survive]] = False
                idx, x, r = idx[survive], x[survive], r[survive]
            else:
                weight[idx] *= c
            if len(idx) == 0:
                break

        y = kernels.sample_sphere_uniform(rng, x, r)
        pos[idx] = ctx.scene.closest_points(y).points

    truncated = alive.copy()
    if truncated.any():
        solver_logger.warning("%d of %d walks hit max_steps=%d.", int(truncated.sum()), n, cfg.max_steps)
    return acc, steps, truncated


def _summarize(samples, steps, truncated):
    n = len(samples)
    mean = samples.mean(axis=0)
    std_error = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    mean = mean.tolist() if mean.size > 1 else float(mean.reshape(-1)[0])
    std_error = std_error.tolist() if np.size(std_error) > 1 else float(np.reshape(std_error, -1)[0])
    return Estimate(
        mean=mean,
        std_error=std_error,
        n_paths=n,
        avg_steps=float(np.mean(steps)) if len(steps) else 0.0,
        max_steps_hit=int(np.sum(truncated)),
    )


def walk_once(ctx, x0, rng):
    """
    One walk from x0.

    :return: (value, steps) with value a float (one channel) or an array.
    """
    start = ctx.scene.closest_points(x0).points
    values, steps, _ = _run_walks(ctx, start, rng)
    value = values[0]
    return (float(value[0]) if value.size == 1 else value), int(steps[0])


def estimate_solution(ctx, x0, point_index=0, stream=STREAM_SOLUTION):
    """Average of n_paths walks from x0; deterministic for fixed (seed, point index, stream)."""
    rng = point_rng(ctx.config.seed, point_index, stream)
    start = ctx.scene.closest_points(x0).points
    starts = np.repeat(start, ctx.config.n_paths, axis=0)
    values, steps, truncated = _run_walks(ctx, starts, rng)
    return _summarize(values, steps, truncated)


def estimate_gradient(ctx, x0, point_index=0, stream=STREAM_GRADIENT):
    """
    Tangential gradient estimate at x0.

    The first step uses the sphere gradient term (3/r) u(cp(y)) n(y) (scaled by
    screened_gradient_weight for σ > 0) plus the volume term with ∇G; every
    sample is projected onto the tangent space at x0 and u(cp(y)) continues with
    the scalar walk. Inside the ε-shell the gradient is reported as zero.
    """
    if ctx.source.kind == "divergence_field":
        raise SolverConfigError("Gradients of divergence sources are not supported.")
    cfg = ctx.config
    rng = point_rng(cfg.seed, point_index, stream)
    hit = ctx.scene.closest_points(x0)
    x = hit.points
    frame = ctx.scene.frames(hit)
    geo = locate_step(ctx, x)
    n = cfg.n_paths
    if geo.terminal[0]:
        return Estimate(mean=[0.0] * 3, std_error=[0.0] * 3, n_paths=n, avg_steps=1.0, max_steps_hit=0)

    r = float(geo.radius[0])
    y = kernels.sample_sphere_uniform(rng, x[0], r, n)
    normals = (y - x[0]) / r
    continued, steps, truncated = _run_walks(ctx, ctx.scene.closest_points(y).points, rng)
    sphere_factor = kernels.screened_gradient_weight(r, cfg.sigma) if cfg.sigma > 0 else 1.0
    samples = (3.0 / r) * sphere_factor * continued[:, :1] * normals

    samples = samples + volume_gradient_terms(ctx, np.repeat(x, n, axis=0), np.full(n, r), rng)

    samples = project_tangent(samples, np.repeat(frame, n, axis=0), np.repeat(hit.patch_dims, n))
    return _summarize(samples, steps + 1, truncated)


@dataclass(frozen=True)
class BatchEstimate:
    """Per-point means and standard errors (m, C) of one lockstep batch of walks."""

    mean: np.ndarray
    std_error: np.ndarray
    avg_steps: np.ndarray
    max_steps_hit: np.ndarray
    n_paths: int


def estimate_batch(ctx, points, stream=STREAM_SOLUTION, n_paths=None):
    """
    Solution estimates at many points from a single lockstep batch of walks.

    All walkers share the generator of (seed, 0, stream), which keeps large
    vertex and pixel sets cheap while staying deterministic.
    """
    n_paths = ctx.config.n_paths if n_paths is None else n_paths
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    m = len(points)
    rng = point_rng(ctx.config.seed, 0, stream)
    starts = np.repeat(ctx.scene.closest_points(points).points, n_paths, axis=0)
    values, steps, truncated = _run_walks(ctx, starts, rng)
    values = values.reshape(m, n_paths, -1)
    std = values.std(axis=1, ddof=1) / np.sqrt(n_paths) if n_paths > 1 else np.zeros_like(values[:, 0])
    return BatchEstimate(
        mean=values.mean(axis=1),
        std_error=std,
        avg_steps=steps.reshape(m, n_paths).mean(axis=1),
        max_steps_hit=truncated.reshape(m, n_paths).sum(axis=1),
        n_paths=n_paths,
    )


def estimate_many(ctx, points, gradient=False, stream=None):
    """
    Estimates at many points, using `config.threads` worker threads.

    Point i always draws from the stream (seed, i, stream), so results do not depend
    on the thread count.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if gradient:
        stream = STREAM_GRADIENT if stream is None else stream
        task = lambda i: estimate_gradient(ctx, points[i], i, stream)  # noqa: E731
    else:
        stream = STREAM_SOLUTION if stream is None else stream
        task = lambda i: estimate_solution(ctx, points[i], i, stream)  # noqa: E731
    if ctx.config.threads == 1:
        results = [task(i) for i in range(len(points))]
    else:
        with ThreadPoolExecutor(max_workers=ctx.config.threads) as pool:
            results = list(pool.map(task, range(len(points))))
    solver_logger.info(
        "Estimated %s at %d points (n_paths=%d).",
        "gradients" if gradient else "solutions",
        len(points),
        ctx.config.n_paths,
    )
    return results
