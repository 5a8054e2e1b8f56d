"""
Utility module for logging setup and data serialization.

Functions:
- get_logger: Create (once) a named logger writing to the shared log directory
  and to the console.
- serialize_data: Recursively convert numpy values and pydantic models into
  JSON-compatible formats.
- stable_key: Hash a JSON-serializable payload into a deterministic cache key.
"""

import hashlib
import json
import logging
import os

import numpy as np
from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def log_directory():
    """
    Resolve the log directory, creating it when missing.

    :return: Absolute path of the directory configured by PWOS_LOG_DIR
        (defaults to `log/` at the repository root).
    """
    default_dir = os.path.abspath(os.path.join(__file__, "../../log"))
    log_dir = os.path.abspath(os.getenv("PWOS_LOG_DIR", default_dir))
    if not os.path.exists(log_dir):
        os.makedirs(log_dir, exist_ok=True)
    return log_dir


def get_logger(name, filename):
    """
    Configure a logger with a file handler and a console handler.

    Handlers are attached only the first time a logger is requested so that
    module reloads do not duplicate output.

    :param name: Logger name, e.g. "solver_logger".
    :param filename: Log file name inside the log directory.
    :return: The configured `logging.Logger`.
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger
    logger.setLevel(logging.INFO)

    # File and console handlers
    file_handler = logging.FileHandler(os.path.join(log_directory(), filename))
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger


def serialize_data(data):
    """
    Recursively converts non-serializable objects into serializable formats.

    :param data: The data to serialize (dict, list, numpy value or pydantic model).
    :return: A JSON-serializable version of the data.
    """
    if isinstance(data, (list, tuple)):
        return [serialize_data(item) for item in data]
    if isinstance(data, dict):
        return {str(key): serialize_data(value) for key, value in data.items()}
    if isinstance(data, np.ndarray):
        return serialize_data(data.tolist())
    if isinstance(data, np.generic):
        return data.item()
    if isinstance(data, float) and not np.isfinite(data):
        return None
    if hasattr(data, "model_dump"):
        return serialize_data(data.model_dump())
    return data


def stable_key(prefix, payload):
    """
    Build a deterministic key for a payload.

    :param prefix: Namespace of the key, e.g. "solve".
    :param payload: JSON-serializable payload.
    :return: "<prefix>:<sha256 of the canonical JSON>".
    """
    canonical = json.dumps(serialize_data(payload), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return f"{prefix}:{digest}"
