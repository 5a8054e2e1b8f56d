"""
Convergence studies over the builtin scenes.

Functions:
- rmse: Root mean squared error of paired estimates.
- run_convergence: RMSE at seeded probe points for a list of path counts.
- write_convergence_csv: `scene,np,rmse,avg_steps,wall_seconds,seed` rows.
- summarize_convergence: Log-log slope and plateau flag per scene.
- step_count_study: Average walk length on the unit sphere for forced feature sizes.
- cap_boundary, polar_starts: Boundary circle and start points of the step-count study.
- radius_cap_study: Convergence runs with bounded sphere sizes.
- filtering_study: Filtered against unfiltered vertex estimates on the curved disk.
"""

import csv
import time
from collections import defaultdict

import numpy as np
from pydantic import BaseModel, Field

from app.services.diffusion_curves import solve_diffusion_on_vertices
from app.services.filtering import FilterOptions
from app.services.geometry import DirichletBoundary
from app.services.medial import ConstantFeatureSize
from app.services.scenes import Tessellation, builtin_scene, scene_atlas
from app.services.solver import (
    SourceTerm,
    WalkContext,
    estimate_batch,
    estimate_many,
    point_rng,
)
from app.utils import get_logger

harness_logger = get_logger("harness_logger", "harness.log")

CSV_COLUMNS = ("scene", "np", "rmse", "avg_steps", "wall_seconds", "seed")
STREAM_PROBES = 10
STREAM_REFERENCE = 11
DEFAULT_PROBES = 100
STEP_COUNT_LFS = (0.99, 0.5, 0.25, 0.125, 0.0625)
STEP_COUNT_CAP = 1.17
STEP_COUNT_SPREAD = 0.05


class ConvergenceRecord(BaseModel):
    scene: str
    n_paths: int
    rmse: float = Field(ge=0)
    avg_steps: float
    wall_seconds: float
    seed: int

    def csv_row(self, omit_timing=False):
        wall = 0.0 if omit_timing else self.wall_seconds
        return [self.scene, self.n_paths, repr(self.rmse), repr(self.avg_steps), repr(wall), self.seed]


def rmse(estimates, reference):
    """
    √(mean of squared differences).

    :raises ValueError: On empty inputs or a length mismatch.
    """
    estimates = np.asarray(estimates, dtype=float).reshape(-1)
    reference = np.asarray(reference, dtype=float).reshape(-1)
    if len(estimates) != len(reference):
        raise ValueError(f"Length mismatch: {len(estimates)} estimates, {len(reference)} references.")
    if len(estimates) == 0:
        raise ValueError("rmse needs at least one pair.")
    return float(np.sqrt(np.mean((estimates - reference) ** 2)))


def _context(spec, cfg, feature_size):
    return WalkContext(
        scene=spec.scene,
        boundary=spec.boundary,
        feature_size=feature_size,
        config=cfg,
        source=spec.source,
    )


def probe_points(spec, n_probes, seed):
    """Seeded probe points; they depend on the seed only, never on the path count."""
    return spec.sample_probes(n_probes, point_rng(seed, 0, STREAM_PROBES))


def run_convergence(
    spec,
    n_paths_list,
    n_probes=DEFAULT_PROBES,
    seeds=(0,),
    overrides=None,
    feature_size=None,
    reference_paths=None,
    tag=None,
):
    """
    RMSE against the reference solution at probe points, one record per (seed, N_P).

    Scenes without an analytic solution are compared with a self reference of
    `reference_paths` walks per probe (default 4 × the largest N_P).

    :param spec: SceneSpec.
    :param n_paths_list: Path counts N_P.
    :param overrides: SolverConfig overrides (epsilon, n_volume, radius_cap, ...).
    :param feature_size: Optional atlas replacing the scene's cached one.
    :param tag: Scene column value; defaults to the scene id.
    :return: List of ConvergenceRecord.
    """
    overrides = dict(overrides or {})
    records = []
    for seed in seeds:
        cfg = spec.solver_config(**{**overrides, "seed": seed})
        atlas = feature_size if feature_size is not None else scene_atlas(spec, cfg)
        probes, reference = probe_points(spec, n_probes, seed)
        if reference is None:
            ref_paths = reference_paths or 4 * max(n_paths_list)
            ref_ctx = _context(spec, cfg.model_copy(update={"n_paths": ref_paths}), atlas)
            reference = np.array(
                [float(e.value()) for e in estimate_many(ref_ctx, probes, stream=STREAM_REFERENCE)]
            )
            harness_logger.info("Self reference for %s with %d paths per probe.", spec.id, ref_paths)
        for n_paths in n_paths_list:
            ctx = _context(spec, cfg.model_copy(update={"n_paths": int(n_paths)}), atlas)
            start = time.perf_counter()
            estimates = estimate_many(ctx, probes)
            wall = time.perf_counter() - start
            values = np.array([float(np.reshape(e.value(), -1)[0]) for e in estimates])
            record = ConvergenceRecord(
                scene=tag or spec.id,
                n_paths=int(n_paths),
                rmse=rmse(values, reference),
                avg_steps=float(np.mean([e.avg_steps for e in estimates])),
                wall_seconds=wall,
                seed=int(seed),
            )
            records.append(record)
            harness_logger.info(
                "%s N_P=%d seed=%d: rmse=%.6g avg_steps=%.2f (%.2fs).",
                record.scene,
                record.n_paths,
                record.seed,
                record.rmse,
                record.avg_steps,
                wall,
            )
    return records


def write_convergence_csv(records, target, omit_timing=False):
    """
    Write records as CSV with LF line endings.

    :param target: File path or an open text stream.
    """
    if hasattr(target, "write"):
        _write_rows(records, target, omit_timing)
        return
    with open(target, "w", encoding="utf-8", newline="") as file:
        _write_rows(records, file, omit_timing)
    harness_logger.info("Wrote %d convergence rows to %s.", len(records), target)


def _write_rows(records, stream, omit_timing):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow(record.csv_row(omit_timing))


def summarize_convergence(records):
    """
    Per scene: log-log slope of the seed-averaged RMSE against N_P and a plateau flag.

    A plateau is reported when the last RMSE exceeds twice the O(1/√N_P)
    extrapolation from the first one.
    """
    grouped = defaultdict(lambda: defaultdict(list))
    for record in records:
        grouped[record.scene][record.n_paths].append(record.rmse)
    summary = {}
    for scene, by_np in grouped.items():
        counts = np.array(sorted(by_np), dtype=float)
        errors = np.array([np.mean(by_np[int(c)]) for c in counts])
        slope = None
        if len(counts) >= 2 and np.all(errors > 0):
            slope = float(np.polyfit(np.log(counts), np.log(errors), 1)[0])
        expected = errors[0] * np.sqrt(counts[0] / counts[-1])
        plateau = bool(len(counts) >= 2 and errors[-1] > 2.0 * expected)
        summary[scene] = {"slope": slope, "plateau": plateau, "final_rmse": float(errors[-1])}
        if plateau:
            harness_logger.warning("Scene %s plateaus at rmse %.4g.", scene, errors[-1])
    return summary


def cap_boundary(cap_radius, n_segments):
    """Closed circle on the unit sphere at angular distance `cap_radius` from the south pole."""
    t = np.linspace(0.0, 2.0 * np.pi, n_segments, endpoint=False)
    ring = np.sin(cap_radius)
    height = np.full(n_segments, -np.cos(cap_radius))
    points = np.column_stack([ring * np.cos(t), ring * np.sin(t), height])
    segments = np.column_stack([np.arange(n_segments), (np.arange(n_segments) + 1) % n_segments])
    return DirichletBoundary(points, np.zeros(n_segments), segments=segments)


def polar_starts(n_starts, spread, rng):
    """Uniform points on the unit sphere within angular distance `spread` of the north pole."""
    colatitude = spread * np.sqrt(rng.random(n_starts))
    azimuth = 2.0 * np.pi * rng.random(n_starts)
    return np.column_stack(
        [
            np.sin(colatitude) * np.cos(azimuth),
            np.sin(colatitude) * np.sin(azimuth),
            np.cos(colatitude),
        ]
    )


def step_count_study(
    lfs_values=STEP_COUNT_LFS,
    epsilon=1e-3,
    n_probes=DEFAULT_PROBES,
    n_paths=64,
    seed=0,
    tessellation=None,
    cap_radius=STEP_COUNT_CAP,
):
    """
    Average walk length of Laplace walks on the unit sphere when the local
    feature size is forced to each of `lfs_values`.

    The boundary is a circle around the south pole (angular radius `cap_radius`)
    and the walks start within STEP_COUNT_SPREAD of the north pole.

    :return: List of {"lfs", "avg_steps"} rows.
    """
    spec = builtin_scene("i", tessellation)
    n_segments = (tessellation or Tessellation()).curve_segments
    boundary = cap_boundary(cap_radius, n_segments)
    starts = polar_starts(n_probes, STEP_COUNT_SPREAD, point_rng(seed, 0, STREAM_PROBES))
    rows = []
    for lfs in lfs_values:
        cfg = spec.solver_config(epsilon=epsilon, n_paths=n_paths, seed=seed, n_volume=0)
        ctx = WalkContext(
            scene=spec.scene,
            boundary=boundary,
            feature_size=ConstantFeatureSize(lfs),
            config=cfg,
            source=SourceTerm.none(),
        )
        est = estimate_batch(ctx, starts)
        rows.append({"lfs": float(lfs), "avg_steps": float(np.mean(est.avg_steps))})
        harness_logger.info("Step count at lfs=%.4g: %.2f.", lfs, rows[-1]["avg_steps"])
    return rows


def radius_cap_study(spec, caps, n_paths_list, n_probes=DEFAULT_PROBES, seeds=(0,), overrides=None):
    """Convergence records per sphere-size cap; the scene column reads `<id>@cap=<value>`."""
    records = []
    for cap in caps:
        cap_overrides = {**(overrides or {}), "radius_cap": cap}
        tag = spec.id if cap is None else f"{spec.id}@cap={cap:g}"
        records.extend(
            run_convergence(spec, n_paths_list, n_probes, seeds, cap_overrides, tag=tag)
        )
    return records


def filtering_study(
    initial_paths=1,
    n_filter_samples=128,
    iterations=10,
    seed=0,
    tessellation=None,
    budget_factor=10,
):
    """
    Vertex RMSE on the curved disk: unfiltered, filtered, and unfiltered with
    `budget_factor` times the initial path count.

    :return: List of row dicts (mode, initial_paths, filter_samples, iterations, rmse, wall_seconds).
    """
    spec = builtin_scene("disk", tessellation)
    cfg = spec.solver_config(seed=seed)
    atlas = scene_atlas(spec, cfg)
    reference = spec.solution(spec.scene.vertices)
    runs = [
        ("unfiltered", initial_paths, 0),
        ("filtered", initial_paths, iterations),
        ("unfiltered", budget_factor * initial_paths, 0),
    ]
    rows = []
    for mode, paths, iters in runs:
        options = FilterOptions(
            n_filter_samples=n_filter_samples, iterations=iters, initial_paths=paths
        )
        start = time.perf_counter()
        values = solve_diffusion_on_vertices(spec.scene, spec.boundary, cfg, options, atlas)
        rows.append(
            {
                "mode": mode,
                "initial_paths": paths,
                "filter_samples": n_filter_samples if iters else 0,
                "iterations": iters,
                "rmse": rmse(values[:, 0], reference),
                "wall_seconds": time.perf_counter() - start,
            }
        )
        harness_logger.info("Filtering study %s (%d paths): rmse=%.5g.", mode, paths, rows[-1]["rmse"])
    return rows


def scene_overrides(
    epsilon=None,
    n_volume=None,
    n_paths=None,
    lam=None,
    scale_axis_s=None,
    sigma=None,
    radius_cap=None,
    threads=None,
    max_steps=None,
    seed_count=None,
):
    """Collect the non-empty command-line or request overrides into SolverConfig keywords."""
    values = {
        "epsilon": epsilon,
        "n_volume": n_volume,
        "n_paths": n_paths,
        "lambda_": lam,
        "scale_axis_s": scale_axis_s,
        "radius_cap": radius_cap,
        "threads": threads,
        "max_steps": max_steps,
        "seed_count": seed_count,
    }
    if sigma is not None:
        harness_logger.warning("Builtin scenes fix sigma; ignoring sigma=%s.", sigma)
    return {k: v for k, v in values.items() if v is not None}


def solve_scene(spec, overrides=None, n_probes=DEFAULT_PROBES, seed=0, feature_size=None):
    """
    One solve at the probe points of a builtin scene.

    :return: dict with the RMSE (None without an analytic solution), walk statistics
        and per-probe estimates.
    """
    cfg = spec.solver_config(**{**(overrides or {}), "seed": seed})
    atlas = feature_size if feature_size is not None else scene_atlas(spec, cfg)
    probes, reference = probe_points(spec, n_probes, seed)
    start = time.perf_counter()
    estimates = estimate_many(_context(spec, cfg, atlas), probes)
    wall = time.perf_counter() - start
    values = np.array([float(np.reshape(e.value(), -1)[0]) for e in estimates])
    errors = np.array([float(np.reshape(e.error(), -1)[0]) for e in estimates])
    result = {
        "scene": spec.id,
        "n_paths": cfg.n_paths,
        "seed": seed,
        "rmse": rmse(values, reference) if reference is not None else None,
        "avg_steps": float(np.mean([e.avg_steps for e in estimates])),
        "max_steps_hit": int(sum(e.max_steps_hit for e in estimates)),
        "wall_seconds": wall,
        "probes": probes.tolist(),
        "estimates": values.tolist(),
        "std_errors": errors.tolist(),
        "reference": reference.tolist() if reference is not None else None,
    }
    harness_logger.info("Solved scene %s at %d probes (N_P=%d).", spec.id, len(probes), cfg.n_paths)
    return result
