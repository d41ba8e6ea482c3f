"""실행 단위: 단일 학습 실행, 축 sweep, 방식 비교

CLI와 큐 worker가 같은 함수를 쓴다.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from owskit.data import TaskStream, make_task
from owskit.errors import ConfigError
from owskit.memory import account_for
from owskit.nn import Model, save_checkpoint
from owskit.optim import save_optimizer_state
from owskit.outlier import save_profile
from owskit.sampling import save_plan
from owskit.schemas import DEFAULT_UPDATE_MODE, SAMPLING_METHODS, MemoryReport, Method, TrainConfig, UpdateMode
from owskit.trainer import Trainer, TrainLog, summarize

logger = logging.getLogger(__name__)

SWEEP_AXES = ("gamma", "rank", "tau")


@dataclass
class RunResult:
    config: TrainConfig
    trainer: Trainer
    log: TrainLog
    summary: Dict[str, object]
    memory: MemoryReport


def prepare_task(config: TrainConfig) -> TaskStream:
    return make_task(config.task, config.model, config.seed, batch_size=config.batch_size, options=config.task_options)


def run_experiment(
    config: TrainConfig,
    model: Optional[Model] = None,
    data: Optional[TaskStream] = None,
    bytes_per_elem: int = 4,
) -> RunResult:
    data = data or prepare_task(config)
    model = model or data.initial_model()
    trainer = Trainer(config, model, data)
    log = trainer.run()
    memory = account_for(config, bytes_per_elem=bytes_per_elem)
    summary = summarize(trainer)
    summary["memory"] = memory.model_dump(mode="json")
    return RunResult(config=config, trainer=trainer, log=log, summary=summary, memory=memory)


def write_run(result: RunResult, out_dir: str | Path) -> Path:
    """log.csv, summary.json, plan.json, profile.json, checkpoint/, optimizer/"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "log.csv").write_text(result.log.to_csv(), encoding="utf-8")
    (root / "summary.json").write_text(json.dumps(result.summary, sort_keys=True, indent=2), encoding="utf-8")
    if result.trainer.plan is not None:
        save_plan(result.trainer.plan, root / "plan.json")
    if result.trainer.profile is not None:
        save_profile(result.trainer.profile, root / "profile.json")
    save_checkpoint(result.trainer.model, root / "checkpoint")
    save_optimizer_state(result.trainer.optimizer_states(), root / "optimizer")
    logger.info("실행 결과 저장: %s", root)
    return root


def _axis_value(axis: str, value: float) -> float | int:
    if axis == "rank":
        if float(value) != int(value):
            raise ConfigError(f"rank values must be integers: {value}")
        return int(value)
    return float(value)


def sweep_configs(base: TrainConfig, axis: str, values: Sequence[float]) -> List[Tuple[float | int, TrainConfig]]:
    """축 값마다 검증된 TrainConfig. tau sweep은 균등 확률 대체를 켠다."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"Unknown sweep axis: {axis} (expected one of {SWEEP_AXES})")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = []
    for raw in values:
        value = _axis_value(axis, raw)
        data = {**base.model_dump(), axis: value}
        if axis == "tau":
            data["uniform_fallback"] = True
        try:
            out.append((value, TrainConfig.model_validate(data)))
        except ValidationError as exc:
            raise ConfigError(f"invalid {axis}={value}: {exc.errors()[0]['msg']}") from exc
    return out


def sweep_row(axis: str, value: float | int, result: RunResult) -> Dict[str, object]:
    return {
        axis: value,
        "method": result.config.method.value,
        "final_eval_loss": result.log.final_eval_loss,
        "final_train_loss": result.log.losses[-1],
        "memory_total_elems": result.memory.total_elems,
        "memory_total_bytes": result.memory.total_bytes,
    }


def run_sweep(base: TrainConfig, axis: str, values: Sequence[float]) -> List[Dict[str, object]]:
    rows = []
    for value, config in sweep_configs(base, axis, values):
        logger.info("sweep %s=%s", axis, value)
        rows.append(sweep_row(axis, value, run_experiment(config)))
    return rows


def compare_update_mode(base: TrainConfig, method: Method) -> UpdateMode:
    """비교 실행의 업데이트 모드.

    샘플링 방식끼리는 base.update_mode(없으면 low-rank) 하나로 맞춘다.
    full/galore는 명시하지 않으면 각자의 기본값을 쓴다.
    """
    if base.update_mode is not None:
        return base.update_mode
    if method in SAMPLING_METHODS:
        return UpdateMode.LOW_RANK
    return DEFAULT_UPDATE_MODE[method]


def run_compare(
    base: TrainConfig,
    methods: Sequence[Method | str],
    seeds: Sequence[int],
) -> List[Dict[str, object]]:
    """방식 × seed 실행. 같은 seed는 같은 태스크와 시작 모델을 공유한다."""
    if not methods or not seeds:
        raise ConfigError("compare needs at least one method and one seed")
    rows: List[Dict[str, object]] = []
    for seed in seeds:
        seeded = TrainConfig.model_validate({**base.model_dump(), "seed": seed})
        data = prepare_task(seeded)
        for tag in methods:
            method = Method(tag)
            config = TrainConfig.model_validate(
                {**seeded.model_dump(), "method": method, "update_mode": compare_update_mode(base, method)}
            )
            result = run_experiment(config, model=data.initial_model(), data=data)
            rows.append(
                {
                    "method": config.method.value,
                    "seed": seed,
                    "update_mode": config.resolved_update_mode().value,
                    "final_eval_loss": result.log.final_eval_loss,
                    "memory_total_elems": result.memory.total_elems,
                }
            )
            logger.info("compare method=%s seed=%d eval=%.6f", config.method.value, seed, result.log.final_eval_loss)
    return rows


def compare_means(rows: Sequence[Dict[str, object]]) -> Dict[str, float]:
    """방식별 평균 final_eval_loss (입력 순서 유지)."""
    grouped: Dict[str, List[float]] = {}
    for row in rows:
        grouped.setdefault(str(row["method"]), []).append(float(row["final_eval_loss"]))
    return {method: float(np.mean(values)) for method, values in grouped.items()}



def seed_wins(rows: Sequence[Dict[str, object]], method: Method | str, other: Method | str) -> Tuple[int, int]:
    """method가 other보다 final_eval_loss가 낮은 seed 수와 공통 seed 수."""
    a, b = Method(method).value, Method(other).value
    by_seed: Dict[object, Dict[str, float]] = {}
    for row in rows:
        by_seed.setdefault(row["seed"], {})[str(row["method"])] = float(row["final_eval_loss"])
    shared = [losses for losses in by_seed.values() if a in losses and b in losses]
    return sum(1 for losses in shared if losses[a] < losses[b]), len(shared)
