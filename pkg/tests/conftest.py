"""
Configuration module for the test suite.

Provides small analytic scenes, seeded generators, a mocked Redis cache and an
HTTP client over the FastAPI application. Long Monte Carlo studies are marked
`slow` and only run when PWOS_RUN_SLOW=1.
"""

import os
from unittest.mock import AsyncMock

import numpy as np
import pytest
import trimesh
from httpx import ASGITransport, AsyncClient

from app.main import app
from app.redis_cache import RedisCache
from app.routes import solver_routes
from app.services.geometry import DirichletBoundary, SurfaceScene
from app.services.medial import ConstantFeatureSize
from app.services.scenes import Tessellation
from app.services.solver import SolverConfig


def pytest_collection_modifyitems(config, items):
    """Skip tests marked `slow` unless PWOS_RUN_SLOW=1."""
    if os.getenv("PWOS_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set PWOS_RUN_SLOW=1 to run long studies")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def set_test_environment():
    """
    Run the suite with APP_ENV=test and restore the original value afterwards.
    """
    original_env = os.getenv("APP_ENV", "production")
    os.environ["APP_ENV"] = "test"
    yield
    os.environ["APP_ENV"] = original_env


@pytest.fixture(autouse=True)
def redis_cache():
    """
    Mock the RedisCache instance used by the solver routes.
    """
    redis_mock = RedisCache()
    redis_mock.redis = AsyncMock()
    redis_mock.redis.get.return_value = None  # Simulates a lack of cached data
    redis_mock.redis.set.return_value = True  # Simulates cache success

    original = solver_routes.redis_cache
    solver_routes.redis_cache = redis_mock
    yield redis_mock
    solver_routes.redis_cache = original


@pytest.fixture
async def test_client():
    """
    Provide a configured HTTP test client.
    """
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as client:
        yield client


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def coarse():
    """Coarse tessellation of the builtin scenes."""
    return Tessellation(curve_segments=256, sphere_subdivisions=3, grid_cells=400, disk_points=400)


@pytest.fixture(scope="session")
def unit_sphere():
    """Icosphere mesh of the unit sphere (642 vertices)."""
    mesh = trimesh.creation.icosphere(subdivisions=3, radius=1.0)
    return SurfaceScene(np.asarray(mesh.vertices), triangles=np.asarray(mesh.faces))


@pytest.fixture(scope="session")
def sphere_cloud():
    """Oriented point cloud of the unit sphere."""
    mesh = trimesh.creation.icosphere(subdivisions=4, radius=1.0)
    vertices = np.asarray(mesh.vertices)
    return SurfaceScene(vertices, points=np.arange(len(vertices)), normals=vertices)


def equator(n=256, values=0.0):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    points = np.column_stack([np.cos(t), np.sin(t), np.zeros(n)])
    segments = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return DirichletBoundary(points, np.broadcast_to(values, (n,)), segments=segments)


@pytest.fixture
def equator_boundary():
    """Equator of the unit sphere carrying zeros."""
    return equator()


@pytest.fixture
def fast_config():
    """Cheap solver settings."""
    return SolverConfig(epsilon=1e-2, n_paths=16, n_volume=4, seed_count=2000, seed=7)


@pytest.fixture
def constant_lfs():
    """Forced local feature size of 0.5."""
    return ConstantFeatureSize(0.5)
