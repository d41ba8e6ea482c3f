"""프로세스 공유 Redis 연결"""

from __future__ import annotations

import os
from typing import Optional

import redis.asyncio as redis

_client: Optional[redis.Redis] = None


def redis_url() -> str:
    return os.getenv("REDIS_URL", "redis://localhost:6379")


def get_redis() -> redis.Redis:
    """처음 호출할 때 REDIS_URL로 연결을 만든다."""
    global _client
    if _client is None:
        _client = redis.from_url(redis_url(), encoding="utf-8", decode_responses=True)
    return _client


def set_redis(client: Optional[redis.Redis]) -> None:
    global _client
    _client = client


async def close_redis() -> None:
    global _client
    if _client is not None:
        await _client.aclose()
        _client = None
