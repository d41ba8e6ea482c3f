"""RunTask 제출 (Redis Streams)"""

from __future__ import annotations

import logging
import uuid
from datetime import datetime, timezone
from typing import Optional, Union

import redis.asyncio as redis

from owskit.schemas import TrainConfig
from owskit.tasks.models import RunTask, TaskType
from owskit.tasks.redis_client import get_redis
from owskit.tasks.store import TaskStore

logger = logging.getLogger(__name__)

STREAM_PREFIX = "owskit:runs:"


def stream_name(task_type: TaskType | str) -> str:
    return f"{STREAM_PREFIX}{TaskType(task_type).value}"


class TaskProducer:
    """레코드를 먼저 저장한 뒤 스트림에는 task_id만 보낸다."""

    def __init__(self, client: Optional[redis.Redis] = None, store: Optional[TaskStore] = None):
        self.redis = client or get_redis()
        self.store = store or TaskStore(self.redis)

    async def submit(
        self,
        config: TrainConfig,
        axis: str,
        value: Union[int, float],
        task_type: TaskType = TaskType.SWEEP_RUN,
    ) -> RunTask:
        task = RunTask(
            task_id=uuid.uuid4().hex,
            task_type=task_type,
            axis=axis,
            value=value,
            config=config.model_dump(mode="json"),
            created_at=datetime.now(timezone.utc),
        )
        await self.store.save(task)
        await self.redis.xadd(stream_name(task_type), {"task_id": task.task_id})
        logger.debug("submitted %s (%s=%s)", task.task_id, axis, value)
        return task
