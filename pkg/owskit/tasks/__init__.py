"""Redis Streams로 sweep 실행을 여러 Worker에 분산한다"""

from owskit.tasks.models import RunTask, TaskStatus, TaskType
from owskit.tasks.producer import TaskProducer
from owskit.tasks.registry import build_worker, register_worker
from owskit.tasks.store import TaskStore

__all__ = [
    "RunTask",
    "TaskStatus",
    "TaskType",
    "TaskStore",
    "TaskProducer",
    "register_worker",
    "build_worker",
]
