"""RunTask 저장소

키 owskit:run:<task_id> 의 Hash에 status와 record(JSON 전체)를 둔다.
"""

from __future__ import annotations

from typing import Any, Optional

import redis.asyncio as redis

from owskit.errors import StateError
from owskit.tasks.models import RunTask, TaskStatus
from owskit.tasks.redis_client import get_redis


class TaskStore:
    KEY_PREFIX = "owskit:run:"
    TTL_SECONDS = 24 * 3600

    def __init__(self, client: Optional[redis.Redis] = None):
        self.redis = client or get_redis()

    def _key(self, task_id: str) -> str:
        return f"{self.KEY_PREFIX}{task_id}"

    async def save(self, task: RunTask) -> RunTask:
        key = self._key(task.task_id)
        await self.redis.hset(key, mapping={"status": TaskStatus(task.status).value, "record": task.model_dump_json()})
        await self.redis.expire(key, self.TTL_SECONDS)
        return task

    async def get(self, task_id: str) -> Optional[RunTask]:
        raw = await self.redis.hget(self._key(task_id), "record")
        if raw is None:
            return None
        return RunTask.model_validate_json(raw)

    async def status(self, task_id: str) -> Optional[TaskStatus]:
        raw = await self.redis.hget(self._key(task_id), "status")
        return TaskStatus(raw) if raw is not None else None

    async def transition(self, task_id: str, status: TaskStatus, **changes: Any) -> RunTask:
        """상태를 바꾸고 나머지 필드를 덮어쓴다. 레코드가 없으면 StateError."""
        task = await self.get(task_id)
        if task is None:
            raise StateError(f"task {task_id} not found (expired?)")
        updated = RunTask.model_validate({**task.model_dump(), **changes, "status": status})
        return await self.save(updated)
