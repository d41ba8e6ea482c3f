"""Worker 공통 수명주기: running -> completed | failed"""

from __future__ import annotations

import asyncio
import logging
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Any, Dict, Optional

from owskit.tasks.models import RunTask, TaskStatus

if TYPE_CHECKING:
    from owskit.tasks.store import TaskStore

logger = logging.getLogger(__name__)


def _now() -> datetime:
    return datetime.now(timezone.utc)


class BaseWorker(ABC):
    """하위 클래스는 compute()만 구현하고 @register_worker로 등록한다."""

    def __init__(self, task: RunTask, store: "TaskStore", worker_id: Optional[str] = None):
        self.task = task
        self.store = store
        self.worker_id = worker_id

    @abstractmethod
    def compute(self) -> Dict[str, Any]:
        """동기 본 작업. 이벤트 루프를 막지 않도록 스레드에서 실행된다."""

    async def execute(self) -> RunTask:
        """실패도 레코드에 남기고 예외를 밖으로 내보내지 않는다."""
        task_id = self.task.task_id
        await self.store.transition(task_id, TaskStatus.RUNNING, started_at=_now(), worker_id=self.worker_id)
        try:
            result = await asyncio.to_thread(self.compute)
        except Exception as exc:
            logger.error("task %s failed: %s", task_id, exc)
            return await self.store.transition(task_id, TaskStatus.FAILED, error=str(exc), finished_at=_now())
        return await self.store.transition(task_id, TaskStatus.COMPLETED, result=result, finished_at=_now())
