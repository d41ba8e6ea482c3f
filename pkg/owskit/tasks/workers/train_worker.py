"""sweep 실행 Worker"""

from __future__ import annotations

from typing import Any, Dict, Union

from owskit.experiment import run_experiment, sweep_row
from owskit.schemas import TrainConfig
from owskit.tasks.models import TaskType
from owskit.tasks.registry import register_worker
from owskit.tasks.workers.base import BaseWorker


def execute_sweep_run(config: Dict[str, Any], axis: str, value: Union[int, float]) -> Dict[str, Any]:
    result = run_experiment(TrainConfig.model_validate(config))
    return sweep_row(axis, value, result)


@register_worker(TaskType.SWEEP_RUN)
class SweepRunWorker(BaseWorker):
    def compute(self) -> Dict[str, Any]:
        return execute_sweep_run(self.task.config, self.task.axis, self.task.value)
