"""
Heat-method geodesic distance.

1. Gradient of the screened problem Δu - u/t = 0 with u = 1 on the boundary,
   estimated directly at the vertices.
2. X = -∇u / |∇u|; vertices with a vanishing gradient copy X from the nearest
   vertex where it is defined.
3. Poisson problem Δφ = ∇·X with φ = 0 on the boundary, using the interpolated
   and renormalized X as a divergence source.
4. φ is recalibrated against the termination shell of width s (ε on meshes,
   wider on point clouds): vertices inside the shell take their distance to the
   boundary, the rest are shifted so that φ ≈ d - s holds on average over
   vertices within 2s, then offset by s.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree

from app.errors import BoundaryError
from app.services.solver import (
    STREAM_GRADIENT,
    SolverConfig,
    SourceTerm,
    WalkContext,
    build_atlas,
    estimate_many,
)
from app.utils import get_logger

apps_logger = get_logger("apps_logger", "apps.log")

DEGENERATE_GRADIENT = 1e-12


class HeatConfig(BaseModel):
    """Heat time (None: (2 × mean local feature size)²) and the downstream solver settings."""

    t: Optional[float] = Field(default=None, gt=0)
    solver: SolverConfig = Field(default_factory=SolverConfig)


def default_heat_time(feature_size, points):
    """(2 × mean local feature size over `points`)²."""
    return float((2.0 * np.mean(feature_size.local_feature_size(points))) ** 2)


def normalized_field(gradients, points):
    """
    -g/|g| per vertex; degenerate rows copy the field of the nearest valid vertex.
    """
    gradients = np.asarray(gradients, dtype=float)
    norms = np.linalg.norm(gradients, axis=1)
    valid = norms >= DEGENERATE_GRADIENT
    field = np.zeros_like(gradients)
    field[valid] = -gradients[valid] / norms[valid, None]
    if not valid.any():
        apps_logger.warning("Heat gradient vanished at every vertex.")
        return field
    if not valid.all():
        _, nearest = cKDTree(points[valid]).query(points[~valid])
        field[~valid] = field[valid][nearest]
        apps_logger.warning("Copied the heat direction at %d degenerate vertices.", int((~valid).sum()))
    return field


def calibrate_to_shell(phi, boundary_distance, shell):
    """
    Undo the offset left by terminating walks at distance `shell` from the boundary.

    :param phi: (n,) Poisson estimates with zero boundary data.
    :param boundary_distance: (n,) distances to the boundary.
    :param shell: Termination shell width.
    :return: (n,) nonnegative distances.
    """
    phi = np.asarray(phi, dtype=float)
    d = np.asarray(boundary_distance, dtype=float)
    near = d < 2.0 * shell
    if not near.any():
        near = d <= d.min()
    shift = float(np.mean(phi[near] - np.maximum(d[near] - shell, 0.0)))
    return np.maximum(np.where(d < shell, d, phi - shift + shell), 0.0)


def geodesic_distance(scene, boundary, cfg=None, feature_size=None):
    """
    Distance from every vertex to the boundary.

    :param scene: SurfaceScene (mesh or oriented point cloud).
    :param boundary: DirichletBoundary (its values are ignored).
    :param cfg: HeatConfig.
    :param feature_size: Optional prebuilt atlas or ConstantFeatureSize.
    :return: (n,) nonnegative distances.
    """
    if boundary is None:
        raise BoundaryError("Geodesic distance needs a boundary.")
    cfg = cfg or HeatConfig()
    solver_cfg = cfg.solver
    feature_size = feature_size if feature_size is not None else build_atlas(scene, solver_cfg)
    vertices = scene.vertices
    t = cfg.t if cfg.t is not None else default_heat_time(feature_size, vertices)
    ones = np.ones(len(boundary.vertices))
    zeros = np.zeros(len(boundary.vertices))

    heat_ctx = WalkContext(
        scene=scene,
        boundary=boundary.with_values(ones),
        feature_size=feature_size,
        config=solver_cfg.model_copy(update={"sigma": 1.0 / t, "n_volume": 0}),
        source=SourceTerm.none(),
    )
    gradients = np.array(
        [e.value() for e in estimate_many(heat_ctx, vertices, gradient=True, stream=STREAM_GRADIENT)]
    )
    field = normalized_field(gradients, vertices)

    poisson_ctx = WalkContext(
        scene=scene,
        boundary=boundary.with_values(zeros),
        feature_size=feature_size,
        config=solver_cfg.model_copy(update={"sigma": 0.0}),
        source=SourceTerm.interpolated(scene, field, renormalize=True),
    )
    phi = np.array([float(e.value()) for e in estimate_many(poisson_ctx, vertices)])

    phi = calibrate_to_shell(phi, boundary.closest(vertices).distances, poisson_ctx.shell)
    apps_logger.info(
        "Geodesic distance: t=%.4g, %d vertices, max distance %.4f.", t, len(vertices), phi.max()
    )
    return phi
