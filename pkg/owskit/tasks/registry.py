"""작업 유형 -> Worker 클래스"""

from __future__ import annotations

from typing import TYPE_CHECKING, Dict, Optional, Type

from owskit.errors import ConfigError
from owskit.tasks.models import RunTask, TaskType

if TYPE_CHECKING:
    from owskit.tasks.store import TaskStore
    from owskit.tasks.workers.base import BaseWorker

WORKER_REGISTRY: Dict[str, Type["BaseWorker"]] = {}


def register_worker(task_type: TaskType):
    """@register_worker(TaskType.SWEEP_RUN) 형태로 Worker 클래스를 등록한다."""
    def decorator(cls: Type["BaseWorker"]) -> Type["BaseWorker"]:
        WORKER_REGISTRY[task_type.value] = cls
        return cls
    return decorator


def build_worker(task: RunTask, store: "TaskStore", worker_id: Optional[str] = None) -> "BaseWorker":
    tag = getattr(task.task_type, "value", task.task_type)
    if tag not in WORKER_REGISTRY:
        raise ConfigError(f"No worker registered for task type: {tag}")
    return WORKER_REGISTRY[tag](task, store, worker_id)
