"""
Surface wave animation by implicit time stepping.

Each frame solves Δu^{n+1} - σ_w u^{n+1} = -σ_w (2u^n - u^{n-1}) with
σ_w = 1 / (c² dt²) at every vertex; the right-hand side is interpolated from the
previous two frames. While `pinned_frames` lasts, one vertex is held at
`pinned_value` as a point boundary.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from app.services.geometry import DirichletBoundary
from app.services.mesh_io import write_ply
from app.services.solver import SourceTerm, WalkContext, build_atlas, estimate_batch
from app.utils import get_logger

apps_logger = get_logger("apps_logger", "apps.log")

STREAM_WAVE = 50


class WaveConfig(BaseModel):
    wave_speed: float = Field(default=1.0, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    frames: int = Field(default=50, ge=1)
    pinned_frames: int = Field(default=49, ge=0)
    pinned_value: float = 1.0
    pinned_vertex: int = Field(default=0, ge=0)


@dataclass(frozen=True)
class WaveState:
    u_curr: np.ndarray
    u_prev: np.ndarray
    dt: float
    wave_speed: float

    def __post_init__(self):
        if len(self.u_curr) != len(self.u_prev):
            raise ValueError("u_curr and u_prev must have the same length.")
        if self.dt <= 0:
            raise ValueError("dt must be positive.")

    @property
    def sigma(self):
        return 1.0 / (self.wave_speed**2 * self.dt**2)


def default_dt(feature_size, points, wave_speed=1.0):
    """dt with σ_w (mean local feature size)² = 1."""
    return float(np.mean(feature_size.local_feature_size(points)) / wave_speed)


def wave_step(scene, state, boundary, solver_cfg, feature_size, step_index=0):
    """
    Advance one frame.

    :param boundary: Optional DirichletBoundary; without one the walks end by
        Russian roulette alone.
    :return: WaveState holding (u^{n+1}, u^n).
    """
    if len(state.u_curr) != scene.vertex_count:
        raise ValueError("Wave state must hold one value per vertex.")
    sigma = state.sigma
    rhs = -sigma * (2.0 * state.u_curr - state.u_prev)
    ctx = WalkContext(
        scene=scene,
        boundary=boundary,
        feature_size=feature_size,
        config=solver_cfg.model_copy(update={"sigma": sigma}),
        source=SourceTerm.interpolated(scene, rhs),
    )
    est = estimate_batch(ctx, scene.vertices, stream=STREAM_WAVE + step_index)
    return WaveState(
        u_curr=est.mean[:, 0].copy(),
        u_prev=state.u_curr,
        dt=state.dt,
        wave_speed=state.wave_speed,
    )


def simulate_wave(scene, wave_cfg, solver_cfg, output_dir=None, feature_size=None, initial=None):
    """
    Run `wave_cfg.frames` steps starting from rest (or from `initial`).

    :param output_dir: When set, frame k is written to `<output_dir>/frame_<k>.ply`.
    :return: List of per-vertex arrays, one per frame.
    """
    feature_size = feature_size if feature_size is not None else build_atlas(scene, solver_cfg)
    if wave_cfg.pinned_vertex >= scene.vertex_count:
        raise ValueError("pinned_vertex is out of range.")
    dt = wave_cfg.dt if wave_cfg.dt is not None else default_dt(
        feature_size, scene.vertices, wave_cfg.wave_speed
    )
    u0 = np.zeros(scene.vertex_count) if initial is None else np.asarray(initial, dtype=float)
    state = WaveState(u_curr=u0, u_prev=u0.copy(), dt=dt, wave_speed=wave_cfg.wave_speed)
    pin = DirichletBoundary(
        scene.vertices[wave_cfg.pinned_vertex : wave_cfg.pinned_vertex + 1],
        np.array([wave_cfg.pinned_value]),
    )
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)

    history = []
    for k in range(wave_cfg.frames):
        boundary = pin if k < wave_cfg.pinned_frames else None
        state = wave_step(scene, state, boundary, solver_cfg, feature_size, k)
        history.append(state.u_curr)
        if output_dir:
            faces = scene.triangles if len(scene.triangles) else None
            write_ply(
                os.path.join(output_dir, f"frame_{k:04d}.ply"),
                scene.vertices,
                faces=faces,
                scalars={"u": state.u_curr},
            )
        apps_logger.debug("Wave frame %d: max |u| = %.4f.", k, float(np.abs(state.u_curr).max()))
    apps_logger.info("Simulated %d wave frames (dt=%.4g).", wave_cfg.frames, dt)
    return history
