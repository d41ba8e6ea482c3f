"""sweep 값들을 큐로 보내고 결과를 모은다"""

from __future__ import annotations

import asyncio
import logging
import os
import time
from typing import Dict, List, Optional, Sequence

import redis.asyncio as redis

from owskit.errors import StateError
from owskit.experiment import sweep_configs
from owskit.schemas import TrainConfig
from owskit.tasks.models import RunTask, TaskStatus
from owskit.tasks.producer import TaskProducer
from owskit.tasks.store import TaskStore

logger = logging.getLogger(__name__)


def get_queue_timeout() -> float:
    return float(os.getenv("OWS_QUEUE_TIMEOUT", "3600"))


async def submit_sweep(
    base: TrainConfig,
    axis: str,
    values: Sequence[float],
    producer: TaskProducer,
) -> List[str]:
    """축 값마다 작업 하나를 제출하고 task_id 목록을 반환한다."""
    task_ids = []
    for value, config in sweep_configs(base, axis, values):
        task = await producer.submit(config, axis, value)
        task_ids.append(task.task_id)
    logger.info("sweep %s: %d개 작업 제출", axis, len(task_ids))
    return task_ids


async def wait_for_results(
    store: TaskStore,
    task_ids: Sequence[str],
    timeout: float,
    poll_interval: float = 1.0,
) -> Dict[str, RunTask]:
    deadline = time.monotonic() + timeout
    done: Dict[str, RunTask] = {}
    while True:
        for task_id in task_ids:
            if task_id in done:
                continue
            record = await store.get(task_id)
            if record is None:
                raise StateError(f"task {task_id} disappeared from the store (expired?)")
            if record.finished:
                done[task_id] = record
        if len(done) == len(task_ids):
            return done
        if time.monotonic() >= deadline:
            raise StateError(f"timed out waiting for {len(task_ids) - len(done)} queued runs")
        await asyncio.sleep(poll_interval)


async def queue_sweep(
    base: TrainConfig,
    axis: str,
    values: Sequence[float],
    client: Optional[redis.Redis] = None,
    timeout: Optional[float] = None,
    poll_interval: float = 1.0,
) -> List[Dict[str, object]]:
    """제출 순서대로 정렬된 sweep 행을 반환한다. 실패한 작업이 있으면 StateError."""
    producer = TaskProducer(client)
    task_ids = await submit_sweep(base, axis, values, producer)
    records = await wait_for_results(
        producer.store,
        task_ids,
        get_queue_timeout() if timeout is None else timeout,
        poll_interval=poll_interval,
    )
    failed = [r for r in records.values() if r.status == TaskStatus.FAILED.value]
    if failed:
        raise StateError("; ".join(f"{r.task_id}: {r.error}" for r in failed))
    return [records[task_id].result for task_id in task_ids]
