"""
Tests for the serialization helpers shared by the routes and the cache keys.
"""

import numpy as np

from app.services.solver import SolverConfig
from app.utils import serialize_data, stable_key


def test_serialize_numpy_and_models():
    """Arrays become lists, numpy scalars become Python numbers, models become dicts."""
    data = {
        "values": np.array([[1.0, 2.0], [3.0, 4.0]]),
        "count": np.int64(3),
        "gap": float("nan"),
        "config": SolverConfig(n_paths=8),
        1: (np.float32(0.5),),
    }
    out = serialize_data(data)
    assert out["values"] == [[1.0, 2.0], [3.0, 4.0]]
    assert out["count"] == 3 and isinstance(out["count"], int)
    assert out["gap"] is None
    assert out["config"]["n_paths"] == 8
    assert out["1"] == [0.5]


def test_unknown_objects_pass_through():
    """Only numpy values, containers and models are converted."""
    marker = object()
    assert serialize_data(marker) is marker
    assert serialize_data("scene") == "scene"


def test_stable_key():
    """Equal payloads hash equally, whatever the key order or array type."""
    first = stable_key("solve", {"scene": "i", "probes": np.array([1, 2])})
    second = stable_key("solve", {"probes": [1, 2], "scene": "i"})
    assert first == second
    assert first.startswith("solve:")
    assert stable_key("solve", {"scene": "k"}) != first
