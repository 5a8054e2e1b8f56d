"""
Mean value filtering with the scene's vertex basis.

One projected sphere step is taken from every vertex with n_filter_samples
samples; samples landing in the ε-shell of the boundary contribute their
boundary value to a per-vertex constant, all others spread their weight over
the vertices of the primitive they project onto. The result is a sparse affine
operator v -> W v + b that is applied a few times to cheap initial estimates.
Screened problems weight the sphere term by c deterministically.

Classes:
- FilterOptions: Filter sample count, iteration count and initial path count.
- FilterOperator / GradientFilterOperator: Sparse rows plus constants.

Functions:
- build_filter, apply_filter, build_gradient_filter, apply_gradient_filter,
  export_triplets.
"""

import csv
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field
from scipy.sparse import coo_matrix

from app.errors import FilterError
from app.services import kernels
from app.services.geometry import project_tangent
from app.services.solver import (
    STREAM_FILTER,
    locate_step,
    point_rng,
    volume_gradient_terms,
    volume_terms,
)
from app.utils import get_logger

filtering_logger = get_logger("filtering_logger", "filtering.log")


class FilterOptions(BaseModel):
    n_filter_samples: int = Field(default=128, ge=1)
    iterations: int = Field(default=10, ge=0)
    initial_paths: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class FilterOperator:
    """
    Affine filter v -> matrix @ v + constants.

    `boundary_mass` is the weight each row sends to the boundary; for Laplace
    problems row sums plus boundary mass equal 1.
    """

    matrix: object
    constants: np.ndarray
    boundary_mass: np.ndarray
    terminal: np.ndarray
    n_filter_samples: int

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GradientFilterOperator:
    """Three sparse operators (x, y, z) mapping vertex values to gradients, plus constants."""

    matrices: tuple
    constants: np.ndarray
    frames: np.ndarray
    patch_dims: np.ndarray
    n_filter_samples: int


def _check_eval_points(ctx, eval_points):
    points = np.asarray(eval_points, dtype=float).reshape(-1, 3)
    vertices = ctx.scene.vertices
    if len(points) != len(vertices) or not np.allclose(
        points, vertices, atol=1e-12 * ctx.scene.diagonal
    ):
        raise FilterError("Filter evaluation points must be the scene's vertices, in order.")
    return points


def _one_step(ctx, points, n_samples, rng):
    """
    Sphere samples of one projected step from every non-terminal point.

    :return: dict with the step geometry, sample rows, projected hits, their step
        geometry and unit sample directions.
    """
    geo = locate_step(ctx, points)
    live = np.flatnonzero(~geo.terminal)
    rows = np.repeat(live, n_samples)
    r = geo.radius[rows]
    y = kernels.sample_sphere_uniform(rng, points[rows], r)
    directions = (y - points[rows]) / r[:, None]
    hits = ctx.scene.closest_points(y)
    sample_geo = locate_step(ctx, hits.points) if len(rows) else None
    return {
        "geo": geo,
        "live": live,
        "rows": rows,
        "radius": r,
        "hits": hits,
        "sample_geo": sample_geo,
        "directions": directions,
    }


def build_filter(ctx, eval_points, n_filter_samples=128):
    """
    Precompute the mean value filter at the scene's vertices.

    :param ctx: WalkContext.
    :param eval_points: The scene's vertices (index-aligned).
    :param n_filter_samples: Sphere samples per vertex.
    :return: FilterOperator.
    """
    if n_filter_samples < 1:
        raise FilterError("n_filter_samples must be at least 1.")
    points = _check_eval_points(ctx, eval_points)
    cfg = ctx.config
    n = len(points)
    channels = ctx.channels
    rng = point_rng(cfg.seed, 0, STREAM_FILTER)
    step = _one_step(ctx, points, n_filter_samples, rng)
    geo, live, rows = step["geo"], step["live"], step["rows"]

    constants = np.zeros((n, channels))
    boundary_mass = np.zeros(n)
    if geo.values is not None:
        constants[geo.terminal] = geo.values[geo.terminal]

    weight = kernels.screened_weight(step["radius"], cfg.sigma) / n_filter_samples
    row_idx, col_idx, vals = [], [], []
    if len(rows):
        sample_geo = step["sample_geo"]
        at_boundary = sample_geo.terminal if sample_geo.values is not None else np.zeros(len(rows), bool)
        if at_boundary.any():
            np.add.at(constants, rows[at_boundary], weight[at_boundary, None] * sample_geo.values[at_boundary])
            np.add.at(boundary_mass, rows[at_boundary], weight[at_boundary])
        inner = ~at_boundary
        vertex_idx, basis_w = ctx.scene.basis(step["hits"].take(inner))
        row_idx = np.repeat(rows[inner], 3)
        col_idx = vertex_idx.ravel()
        vals = (basis_w * weight[inner, None]).ravel()

    matrix = coo_matrix((vals, (row_idx, col_idx)), shape=(n, n)).tocsr()
    matrix.eliminate_zeros()

    if len(live):
        constants[live] += volume_terms(ctx, points[live], geo.radius[live], rng)[:, None]

    filtering_logger.info(
        "Built filter: %d vertices, %d terminal, %d nonzeros (%d samples each).",
        n,
        int(geo.terminal.sum()),
        matrix.nnz,
        n_filter_samples,
    )
    return FilterOperator(
        matrix=matrix,
        constants=constants,
        boundary_mass=boundary_mass,
        terminal=geo.terminal,
        n_filter_samples=n_filter_samples,
    )


def apply_filter(op, values, iterations=10):
    """
    Apply the filter `iterations` times.

    :param values: (n,) or (n, C) vertex values.
    :return: Filtered values with the input's shape.
    """
    values = np.asarray(values, dtype=float)
    if len(values) != op.size:
        raise FilterError(f"Expected {op.size} vertex values, got {len(values)}.")
    flat = values.ndim == 1
    current = values.reshape(op.size, -1)
    constants = op.constants
    if constants.shape[1] != current.shape[1]:
        if constants.shape[1] != 1:
            raise FilterError("Value channels do not match the filter constants.")
        constants = np.repeat(constants, current.shape[1], axis=1)
    for _ in range(iterations):
        current = op.matrix @ current + constants
    return current[:, 0] if flat else current


def build_gradient_filter(ctx, eval_points, n_filter_samples=128):
    """
    Gradient filter: maps scalar vertex estimates to tangential gradients at the vertices.

    Each sphere sample contributes (3/r) u(cp(y)) n(y) / n_filter_samples, scaled by
    screened_gradient_weight for σ > 0; samples reaching the boundary use the
    boundary value, all others the vertex basis.
    """
    points = _check_eval_points(ctx, eval_points)
    cfg = ctx.config
    n = len(points)
    rng = point_rng(cfg.seed, 1, STREAM_FILTER)
    step = _one_step(ctx, points, n_filter_samples, rng)
    geo, live, rows = step["geo"], step["live"], step["rows"]

    constants = np.zeros((n, 3))
    matrices = []
    if len(rows):
        r = step["radius"]
        factor = 3.0 / r / n_filter_samples
        if cfg.sigma > 0:
            factor = factor * kernels.screened_gradient_weight(r, cfg.sigma)
        dir_weight = factor[:, None] * step["directions"]
        sample_geo = step["sample_geo"]
        at_boundary = sample_geo.terminal if sample_geo.values is not None else np.zeros(len(rows), bool)
        if at_boundary.any():
            np.add.at(
                constants,
                rows[at_boundary],
                dir_weight[at_boundary] * sample_geo.values[at_boundary, :1],
            )
        inner = ~at_boundary
        vertex_idx, basis_w = ctx.scene.basis(step["hits"].take(inner))
        row_idx = np.repeat(rows[inner], 3)
        for axis in range(3):
            vals = (basis_w * dir_weight[inner, axis, None]).ravel()
            matrices.append(coo_matrix((vals, (row_idx, vertex_idx.ravel())), shape=(n, n)).tocsr())
        constants[live] += volume_gradient_terms(ctx, points[live], geo.radius[live], rng)
    else:
        matrices = [coo_matrix((n, n)).tocsr() for _ in range(3)]

    hits = ctx.scene.closest_points(points)
    return GradientFilterOperator(
        matrices=tuple(matrices),
        constants=constants,
        frames=ctx.scene.frames(hits),
        patch_dims=hits.patch_dims,
        n_filter_samples=n_filter_samples,
    )


def apply_gradient_filter(op, values):
    """Tangential gradients (n, 3) from scalar vertex values (n,)."""
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(values) != len(op.constants):
        raise FilterError(f"Expected {len(op.constants)} vertex values, got {len(values)}.")
    grad = np.column_stack([m @ values for m in op.matrices]) + op.constants
    return project_tangent(grad, op.frames, op.patch_dims)


def export_triplets(op, path):
    """Write the filter as `row,col,weight` triplets followed by `row,-1,constant` lines."""
    coo = op.matrix.tocoo()
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["row", "col", "weight"])
        for i, j, w in zip(coo.row, coo.col, coo.data):
            writer.writerow([int(i), int(j), repr(float(w))])
        for i, c in enumerate(op.constants[:, 0]):
            if c != 0:
                writer.writerow([i, -1, repr(float(c))])
    filtering_logger.info("Exported %d filter triplets to %s.", coo.nnz, path)
