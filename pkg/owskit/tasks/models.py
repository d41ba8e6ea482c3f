"""큐로 분산되는 학습 실행 레코드"""

from __future__ import annotations

from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict


class TaskStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class TaskType(str, Enum):
    # sweep 축 값 하나에 대한 학습 실행
    SWEEP_RUN = "sweep-run"


class RunTask(BaseModel):
    """sweep 실행 하나. config는 검증된 TrainConfig의 JSON 덤프."""
    model_config = ConfigDict(use_enum_values=True)

    task_id: str
    task_type: TaskType = TaskType.SWEEP_RUN
    status: TaskStatus = TaskStatus.PENDING
    axis: str
    value: Union[int, float]
    config: Dict[str, Any]
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    worker_id: Optional[str] = None
    created_at: datetime
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None

    @property
    def finished(self) -> bool:
        return TaskStatus(self.status) in (TaskStatus.COMPLETED, TaskStatus.FAILED)
