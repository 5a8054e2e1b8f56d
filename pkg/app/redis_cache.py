"""
Redis Cache Utility Module

Solver results are deterministic for a fixed request, so the HTTP routes keep
them in Redis under a hash of the canonical request. The cache is optional:
connection and command failures are logged and treated as cache misses.
"""

import json
import os

import redis.asyncio as redis
from dotenv import load_dotenv
from redis.exceptions import RedisError

from app.utils import get_logger, serialize_data

logger = get_logger("routes_logger", "routes.log")

# Load environment variables
load_dotenv()

# Configuration for Redis connection and cache expiration
REDIS_URL = os.getenv("REDIS_URL", None)
REDIS_HOST = os.getenv("REDIS_HOST", "localhost")
REDIS_PORT = int(os.getenv("REDIS_PORT", "6379"))
REDIS_CACHE_EXPIRE = int(os.getenv("REDIS_CACHE_EXPIRE", "600"))


class RedisCache:
    """
    Thin wrapper over `redis.asyncio` storing JSON documents with an expiry.
    """

    def __init__(self):
        self.redis = None

    async def connect(self):
        """
        Create the Redis client.

        Uses REDIS_URL when defined, otherwise REDIS_HOST and REDIS_PORT.
        """
        if REDIS_URL:
            self.redis = redis.from_url(REDIS_URL, decode_responses=True)
        else:
            self.redis = redis.Redis(host=REDIS_HOST, port=REDIS_PORT, decode_responses=True)
        logger.info("Redis client configured.")

    async def set(self, key, value):
        """
        Store a JSON-serializable value for REDIS_CACHE_EXPIRE seconds.

        :param key: Cache key.
        :param value: Value; numpy arrays and pydantic models are serialized first.
        :return: True when stored.
        """
        if self.redis is None:
            return False
        try:
            await self.redis.set(key, json.dumps(serialize_data(value)), ex=REDIS_CACHE_EXPIRE)
            return True
        except (RedisError, OSError) as e:
            logger.warning("Cache write failed for %s: %s", key, e)
            return False

    async def get(self, key):
        """
        Fetch a cached value.

        :param key: Cache key.
        :return: The decoded value, or None on a miss or a cache failure.
        """
        if self.redis is None:
            return None
        try:
            value = await self.redis.get(key)
        except (RedisError, OSError) as e:
            logger.warning("Cache read failed for %s: %s", key, e)
            return None
        return json.loads(value) if value else None

    async def close(self):
        """Close the client, if any."""
        if self.redis is None:
            return
        try:
            await self.redis.close()
        except (RedisError, OSError) as e:
            logger.warning("Closing Redis failed: %s", e)


# Global RedisCache instance for application-wide use
redis_cache = RedisCache()
