"""
Solver API Endpoints

Endpoints:
- GET /scenes: Builtin scene ids and descriptions.
- POST /solve: Solve a builtin scene at seeded probe points.
- POST /convergence: RMSE against the path count for a builtin scene.
- GET /medial/{scene_id}: Summary of a scene's medial atlas.

Results are deterministic for a fixed request and are cached in Redis; the
Monte Carlo work runs in a worker thread.
"""

from typing import List, Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field
from starlette.concurrency import run_in_threadpool

from app.errors import PWoSError, SceneError
from app.redis_cache import redis_cache
from app.services.convergence import (
    run_convergence,
    scene_overrides,
    solve_scene,
    summarize_convergence,
)
from app.services.scenes import Tessellation, builtin_scene, describe_scenes, scene_atlas
from app.utils import get_logger, serialize_data, stable_key

routes_logger = get_logger("routes_logger", "routes.log")

routes_logger.info("Solver Routes API initialized.")

router = APIRouter()


class SolverOverrides(BaseModel):
    """Optional SolverConfig values applied on top of the scene defaults."""

    epsilon: Optional[float] = Field(default=None, gt=0)
    n_volume: Optional[int] = Field(default=None, ge=0)
    n_paths: Optional[int] = Field(default=None, ge=1)
    lam: Optional[float] = Field(default=None, gt=0)
    scale_axis_s: Optional[float] = Field(default=None, gt=1)
    radius_cap: Optional[float] = Field(default=None, gt=0)
    seed_count: Optional[int] = Field(default=None, ge=1)


class SolveRequest(BaseModel):
    scene: str
    config: SolverOverrides = Field(default_factory=SolverOverrides)
    probes: int = Field(default=100, ge=1, le=10_000)
    seed: int = Field(default=0, ge=0)
    tessellation: Optional[Tessellation] = None


class ConvergenceRequest(BaseModel):
    scene: str
    np: List[int] = Field(default=[16, 64, 256, 1024])
    probes: int = Field(default=100, ge=1, le=10_000)
    seeds: List[int] = Field(default=[0])
    config: SolverOverrides = Field(default_factory=SolverOverrides)
    tessellation: Optional[Tessellation] = None


def _overrides(config):
    return scene_overrides(
        epsilon=config.epsilon,
        n_volume=config.n_volume,
        n_paths=config.n_paths,
        lam=config.lam,
        scale_axis_s=config.scale_axis_s,
        radius_cap=config.radius_cap,
        seed_count=config.seed_count,
    )


async def _cached(key, compute):
    cached = await redis_cache.get(key)
    if cached is not None:
        routes_logger.info("Cache hit for %s", key)
        return cached
    try:
        result = serialize_data(await run_in_threadpool(compute))
    except SceneError as e:
        routes_logger.warning("Unknown scene: %s", e)
        raise HTTPException(status_code=404, detail=str(e)) from e
    except (PWoSError, ValueError) as e:
        routes_logger.warning("Rejected request: %s", e)
        raise HTTPException(status_code=400, detail=str(e)) from e
    except Exception as e:
        routes_logger.error("Solver failure: %s", e)
        raise HTTPException(status_code=500, detail="Internal solver error.") from e
    await redis_cache.set(key, result)
    return result


@router.get("/scenes")
async def list_scenes():
    """
    List the builtin scenes.

    :return: A list of {"id", "description"} objects.
    """
    routes_logger.info("Listing builtin scenes.")
    return {"scenes": describe_scenes()}


@router.post("/solve")
async def solve(request: SolveRequest):
    """
    Solve a builtin scene at `probes` seeded surface points.

    :return: RMSE against the analytic solution (null without one), walk statistics
        and per-probe estimates.
    """
    key = stable_key("solve", request.model_dump())

    def compute():
        spec = builtin_scene(request.scene, request.tessellation)
        return solve_scene(spec, _overrides(request.config), request.probes, request.seed)

    return await _cached(key, compute)


@router.post("/convergence")
async def convergence(request: ConvergenceRequest):
    """
    Run a convergence study.

    :return: Records (scene, n_paths, rmse, avg_steps, wall_seconds, seed) and the
        per-scene slope / plateau summary.
    """
    if not request.np:
        raise HTTPException(status_code=400, detail="np must list at least one path count.")
    key = stable_key("convergence", request.model_dump())

    def compute():
        spec = builtin_scene(request.scene, request.tessellation)
        overrides = _overrides(request.config)
        overrides.pop("n_paths", None)
        records = run_convergence(spec, request.np, request.probes, request.seeds, overrides)
        return {
            "records": [r.model_dump() for r in records],
            "summary": summarize_convergence(records),
        }

    return await _cached(key, compute)


@router.get("/medial/{scene_id}")
async def medial(scene_id: str, seed: int = 0):
    """
    Summarize the medial atlas of a builtin scene.

    :return: Center count, radius range, λ and local feature size statistics at the vertices.
    """
    key = stable_key("medial", {"scene": scene_id, "seed": seed})

    def compute():
        spec = builtin_scene(scene_id)
        atlas = scene_atlas(spec, spec.solver_config(seed=seed))
        lfs = atlas.local_feature_size(spec.scene.vertices)
        summary = atlas.summary()
        summary.update(
            {
                "scene": scene_id,
                "lfs_min": float(lfs.min()),
                "lfs_mean": float(lfs.mean()),
                "lfs_max": float(lfs.max()),
            }
        )
        return summary

    return await _cached(key, compute)
