"""
Tests for the solver endpoints.

This module checks the scene listing, request validation, error mapping,
Redis caching and small solves on the coarse tessellation.
"""

import json

import pytest

COARSE = {"curve_segments": 256, "sphere_subdivisions": 3, "grid_cells": 400, "disk_points": 400}
FAST = {"epsilon": 0.01, "n_volume": 4, "n_paths": 4, "seed_count": 300}


@pytest.mark.asyncio
async def test_root_endpoint(test_client):
    """
    Test the welcome message and the timing header.
    """
    response = await test_client.get("/")
    assert response.status_code == 200
    assert response.json() == {"message": "Welcome to the PWoS solver API!"}
    assert "X-Process-Time" in response.headers


@pytest.mark.asyncio
async def test_list_scenes(test_client):
    """
    Test that every builtin scene is listed with a description.
    """
    response = await test_client.get("/scenes")
    assert response.status_code == 200
    scenes = response.json()["scenes"]
    assert len(scenes) == 20
    assert scenes[0]["id"] == "a"
    assert {"id", "description"}.issubset(scenes[-1].keys())


@pytest.mark.asyncio
async def test_solve_unknown_scene(test_client):
    """
    Test that an unknown scene id is reported as 404.
    """
    response = await test_client.post("/solve", json={"scene": "zz"})
    assert response.status_code == 404


@pytest.mark.asyncio
async def test_medial_unknown_scene(test_client):
    """
    Test that the medial summary of an unknown scene is a 404.
    """
    response = await test_client.get("/medial/zz")
    assert response.status_code == 404


@pytest.mark.asyncio
@pytest.mark.parametrize(
    "body",
    [
        {"scene": "i", "probes": 0},
        {"scene": "i", "config": {"epsilon": -1.0}},
        {"scene": "i", "config": {"scale_axis_s": 0.5}},
        {"probes": 3},
    ],
)
async def test_solve_validation(test_client, body):
    """
    Test that malformed request bodies are rejected with 422.
    """
    response = await test_client.post("/solve", json=body)
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_solve_small_scene(test_client, redis_cache):
    """
    Test a small solve on the coarse sphere and that the result is cached.
    """
    body = {"scene": "i", "probes": 3, "seed": 1, "config": FAST, "tessellation": COARSE}
    response = await test_client.post("/solve", json=body)
    assert response.status_code == 200
    data = response.json()
    assert data["scene"] == "i"
    assert data["n_paths"] == 4
    assert len(data["estimates"]) == 3
    assert data["rmse"] >= 0.0
    redis_cache.redis.set.assert_awaited_once()


@pytest.mark.asyncio
async def test_solve_cache_hit(test_client, redis_cache):
    """
    Test that a cached result is returned without solving.
    """
    cached = {"scene": "i", "rmse": 0.125}
    redis_cache.redis.get.return_value = json.dumps(cached)
    response = await test_client.post("/solve", json={"scene": "i"})
    assert response.status_code == 200
    assert response.json() == cached
    redis_cache.redis.set.assert_not_awaited()


@pytest.mark.asyncio
async def test_convergence_needs_path_counts(test_client):
    """
    Test that an empty path count list is a 400.
    """
    response = await test_client.post("/convergence", json={"scene": "i", "np": []})
    assert response.status_code == 400


@pytest.mark.asyncio
async def test_convergence_small_study(test_client):
    """
    Test a two-point study on the coarse sphere.
    """
    body = {
        "scene": "i",
        "np": [2, 4],
        "probes": 2,
        "config": FAST,
        "tessellation": COARSE,
    }
    response = await test_client.post("/convergence", json=body)
    assert response.status_code == 200
    data = response.json()
    assert [r["n_paths"] for r in data["records"]] == [2, 4]
    assert "i" in data["summary"]
