"""sweep 실행 소비자

스트림 메시지는 task_id만 담고, 실제 설정은 TaskStore의 RunTask에서 읽는다.
처리 결과와 상관없이 메시지는 ACK 한다.
"""

from __future__ import annotations

import asyncio
import logging
import uuid
from typing import Iterable, List, Optional, Tuple

import redis.asyncio as redis
from redis.exceptions import ConnectionError as RedisConnectionError
from redis.exceptions import ResponseError

import owskit.tasks.workers  # noqa: F401  (Worker 등록)
from owskit.tasks.models import TaskType
from owskit.tasks.producer import stream_name
from owskit.tasks.redis_client import get_redis
from owskit.tasks.registry import WORKER_REGISTRY, build_worker
from owskit.tasks.store import TaskStore

logger = logging.getLogger(__name__)

DEFAULT_GROUP = "ows-workers"
DEFAULT_BLOCK_MS = 5000
RETRY_DELAY_S = 1.0

Entry = Tuple[str, str, str]  # (stream, message id, task_id)


class TaskConsumer:
    def __init__(
        self,
        worker_id: Optional[str] = None,
        client: Optional[redis.Redis] = None,
        block_ms: Optional[int] = None,
    ):
        self.redis = client or get_redis()
        self.store = TaskStore(self.redis)
        self.worker_id = worker_id or f"worker-{uuid.uuid4().hex[:8]}"
        self.block_ms = DEFAULT_BLOCK_MS if block_ms is None else block_ms
        self.processed = 0
        self._stopping = False

    def stop(self) -> None:
        self._stopping = True

    async def run(
        self,
        task_types: Optional[Iterable[str]] = None,
        group: Optional[str] = None,
        max_tasks: Optional[int] = None,
    ) -> int:
        """max_tasks개를 처리하거나 stop()될 때까지 소비하고 처리 개수를 반환한다."""
        types = [TaskType(t).value for t in (task_types or WORKER_REGISTRY)]
        if not types:
            logger.warning("등록된 Worker가 없어 종료합니다")
            return self.processed
        group = group or DEFAULT_GROUP
        streams = [stream_name(t) for t in types]
        await self._ensure_groups(streams, group)
        logger.info("consumer %s started on %s", self.worker_id, streams)

        while not self._stopping and (max_tasks is None or self.processed < max_tasks):
            try:
                for entry in await self._read(streams, group):
                    await self._handle(entry, group)
            except asyncio.CancelledError:
                break
            except ResponseError as exc:
                # 스트림이 지워지면 그룹도 사라진다
                if "NOGROUP" not in str(exc):
                    raise
                logger.warning("consumer group missing, recreating: %s", exc)
                await self._ensure_groups(streams, group)
            except RedisConnectionError as exc:
                logger.error("redis unavailable, retrying in %ss: %s", RETRY_DELAY_S, exc)
                await asyncio.sleep(RETRY_DELAY_S)

        logger.info("consumer %s stopped after %d tasks", self.worker_id, self.processed)
        return self.processed

    async def _ensure_groups(self, streams: List[str], group: str) -> None:
        for stream in streams:
            try:
                await self.redis.xgroup_create(stream, group, id="0", mkstream=True)
            except ResponseError as exc:
                if "BUSYGROUP" not in str(exc):
                    raise

    async def _read(self, streams: List[str], group: str) -> List[Entry]:
        response = await self.redis.xreadgroup(
            group, self.worker_id, {s: ">" for s in streams}, count=1, block=self.block_ms
        )
        return [
            (stream, msg_id, fields.get("task_id", ""))
            for stream, messages in (response or [])
            for msg_id, fields in messages
        ]

    async def _handle(self, entry: Entry, group: str) -> None:
        stream, msg_id, task_id = entry
        try:
            task = await self.store.get(task_id)
            if task is None:
                logger.warning("task %s not in store, dropping message %s", task_id, msg_id)
                return
            finished = await build_worker(task, self.store, self.worker_id).execute()
            logger.info("task %s %s (%s=%s)", task_id, finished.status, task.axis, task.value)
        except Exception as exc:
            logger.error("task %s could not be processed: %s", task_id, exc)
        finally:
            await self.redis.xack(stream, group, msg_id)
            self.processed += 1
