"""학습 루프

학습 전: 보정 배치로 이상치 프로파일(필요 시 BI/RM 점수)을 만들고 SamplingPlan을 한 번 구한다.
학습 중: K 스텝마다 활성 블록을 다시 뽑고, 매 스텝
    forward → 활성 블록 + embedding/head만 backward →
    활성 블록 행렬은 저랭크(또는 full-rank) Adam, 나머지 파라미터는 full-rank Adam.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from owskit.data import TaskStream
from owskit.errors import ConfigError, DivergenceError, StateError
from owskit.nn import Batch, Model, backward, forward, get_arch, parse_param_name
from owskit.optim import AdamState, LowRankOptState, adam_step, low_rank_step
from owskit.outlier import build_profile, calibrate
from owskit.sampling import ActiveSet, PlanInputs, bi_scores, build_plan, draw_active_set, rm_scores
from owskit.schemas import LRSchedule, Method, OutlierProfile, SamplingPlan, TrainConfig, UpdateMode

logger = logging.getLogger(__name__)

OptState = Union[AdamState, LowRankOptState]

LOG_CSV_HEADER = ("step", "loss", "lr", "active_set")


def learning_rate(config: TrainConfig, step: int) -> float:
    if config.lr_schedule == LRSchedule.LINEAR:
        return config.lr * (1.0 - step / config.total_steps)
    return config.lr


def evaluate(model: Model, data: TaskStream, split: str = "validation", n_batches: int = 4) -> float:
    """split의 앞 n_batches 배치에 대한 평균 loss. 파라미터는 건드리지 않는다."""
    if n_batches < 1:
        raise ConfigError(f"evaluation split '{split}' is empty")
    losses = [forward(model, data.batch(split, i)).loss for i in range(n_batches)]
    return float(sum(losses) / len(losses))


@dataclass
class TrainLog:
    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    active_sets: List[Tuple[int, ...]] = field(default_factory=list)
    activation_counts: List[int] = field(default_factory=list)
    step_seconds: List[float] = field(default_factory=list)
    initial_eval_loss: Optional[float] = None
    final_eval_loss: Optional[float] = None
    log_every: int = 1
    sample_period_k: int = 1

    def logged_steps(self) -> List[int]:
        last = len(self.losses) - 1
        return [s for s in range(len(self.losses)) if s % self.log_every == 0 or s == last]

    def to_csv(self) -> str:
        """step,loss,lr,active_set. 실수는 repr 표기라 재실행 시 바이트 단위로 같다."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(LOG_CSV_HEADER)
        for s in self.logged_steps():
            active = self.active_sets[s // self.sample_period_k]
            writer.writerow([s, repr(self.losses[s]), repr(self.lrs[s]), ";".join(str(i) for i in active)])
        return buffer.getvalue()


@dataclass
class TrainerSnapshot:
    """학습 중 특정 시점의 실제 메모리 점유 (원소 수)."""
    config: TrainConfig
    period_index: int
    active_blocks: Tuple[int, ...]
    blocks_with_state: Tuple[int, ...]
    weights_elems: int
    grad_elems: int
    opt_elems: int
    activation_elems: int


class Trainer:
    """profile → plan → 주기별 샘플링 → 마스킹된 backward → 업데이트"""

    def __init__(self, config: TrainConfig, model: Model, data: TaskStream) -> None:
        if model.spec != config.model:
            raise ConfigError("model spec does not match config.model")
        self.config = config
        self.model = model
        self.data = data
        self.arch = get_arch(model.spec.arch)
        self.update_mode = config.resolved_update_mode()

        self.profile: Optional[OutlierProfile] = None
        self.scores: Optional[List[float]] = None
        self.plan: Optional[SamplingPlan] = None
        self.active: Optional[ActiveSet] = None

        self.unit_states: Dict[str, AdamState] = {}
        self.block_states: Dict[int, Dict[str, OptState]] = {}
        self.log = TrainLog(log_every=config.log_every, sample_period_k=config.sample_period_k)
        self.step = 0
        self._last_grad_elems = 0
        self._last_activation_elems = 0

    @property
    def n_periods(self) -> int:
        return self.config.total_steps // self.config.sample_period_k

    # --------------------------------------------------------
    # 학습 전 단계
    # --------------------------------------------------------
    def _calibration_batches(self) -> List[Batch]:
        return self.data.batches("calibration", self.config.calibration_batches)

    def _build_importance(self) -> None:
        batches = self._calibration_batches()
        self.profile = build_profile(self.model, calibrate(self.model, batches), self.config.tau)
        if self.config.method == Method.BI:
            self.scores = bi_scores(self.model, batches)
        elif self.config.method == Method.RM:
            self.scores = rm_scores(self.model, batches)

    def _build_plan(self) -> SamplingPlan:
        inputs = PlanInputs(n_layers=self.model.spec.n_layers, profile=self.profile, scores=self.scores)
        return build_plan(
            self.config.method,
            self.config.gamma,
            inputs,
            uniform_fallback=self.config.uniform_fallback,
        )

    def prepare(self) -> SamplingPlan:
        self._build_importance()
        self.plan = self._build_plan()
        self.log.activation_counts = [0] * self.model.spec.n_layers
        self.log.initial_eval_loss = evaluate(self.model, self.data, n_batches=self.config.eval_batches)
        logger.info(
            "plan: method=%s, gamma=%s, p=%s",
            self.plan.method.value,
            self.plan.gamma,
            ", ".join(f"{x:.4f}" for x in self.plan.p),
        )
        return self.plan

    # --------------------------------------------------------
    # 옵티마이저 상태
    # --------------------------------------------------------
    def _adam_kwargs(self) -> dict:
        c = self.config
        return {"lr": c.lr, "beta1": c.beta1, "beta2": c.beta2, "eps": c.eps, "sgd": c.sgd}

    def _new_state(self, local: str, shape: Tuple[int, int]) -> OptState:
        is_matrix = local in self.arch.INPUT_KEYS
        if is_matrix and self.update_mode == UpdateMode.LOW_RANK:
            return LowRankOptState.create(
                shape,
                self.config.rank,
                refresh_every=self.config.refresh_every,
                scale=self.config.projection_scale,
                svd_method=self.config.svd_method,
                seed=self.config.seed,
                **self._adam_kwargs(),
            )
        return AdamState(shape=shape, **self._adam_kwargs())

    def _state_for(self, name: str, shape: Tuple[int, int]) -> OptState:
        index, local = parse_param_name(name)
        if index is None:
            if name not in self.unit_states:
                self.unit_states[name] = AdamState(shape=shape, **self._adam_kwargs())
            return self.unit_states[name]
        states = self.block_states.setdefault(index, {})
        if local not in states:
            states[local] = self._new_state(local, shape)
        return states[local]

    def _release_dormant(self, active: ActiveSet) -> None:
        if self.config.retain_dormant_state:
            return
        for index in [i for i in self.block_states if i not in active]:
            del self.block_states[index]

    def live_optimizer_elements(self) -> int:
        units = sum(s.state_elements() for s in self.unit_states.values())
        blocks = sum(s.state_elements() for states in self.block_states.values() for s in states.values())
        return units + blocks

    # --------------------------------------------------------
    # 학습 루프
    # --------------------------------------------------------
    def _train_step(self, frozen: Sequence[int]) -> float:
        started = time.perf_counter()
        batch = self.data.batch("train", self.step)
        trace = forward(self.model, batch)
        if not math.isfinite(trace.loss):
            raise DivergenceError(self.step, trace.loss)

        grads = backward(self.model, trace, frozen=frozen)
        lr = learning_rate(self.config, self.step)
        params = self.model.named_parameters()
        for name, g in grads.grads.items():
            state = self._state_for(name, g.shape)
            if isinstance(state, LowRankOptState):
                update = low_rank_step(state, g, lr=lr)
            else:
                update = adam_step(state, g, lr=lr)
            params[name] += update
        self.model.touch()

        self._last_grad_elems = grads.element_count()
        self._last_activation_elems = trace.cached_elements()
        self.log.losses.append(trace.loss)
        self.log.lrs.append(lr)
        self.log.step_seconds.append(time.perf_counter() - started)
        if self.step % self.config.log_every == 0:
            logger.info(
                "step=%d loss=%.6f lr=%.3g active=%s (%.3fs)",
                self.step,
                trace.loss,
                lr,
                list(self.active.active_blocks) if self.active else [],
                self.log.step_seconds[-1],
            )
        self.step += 1
        return trace.loss

    def run_period(self, period: int) -> ActiveSet:
        if self.plan is None:
            raise StateError("call prepare() before run_period()")
        if period != self.step // self.config.sample_period_k:
            raise StateError(f"period {period} out of order (next period is {self.step // self.config.sample_period_k})")
        reprofile = self.config.reprofile_every
        if reprofile and period > 0 and period % reprofile == 0:
            self._build_importance()
            self.plan = self._build_plan()
            logger.info("re-profiled at period %d: p=%s", period, [round(x, 4) for x in self.plan.p])

        self.active = draw_active_set(self.plan, self.config.seed, period, self.config.sampling_mode)
        self._release_dormant(self.active)
        self.log.active_sets.append(self.active.active_blocks)
        for i in self.active.active_blocks:
            self.log.activation_counts[i] += 1

        frozen = self.active.frozen_blocks()
        for _ in range(self.config.sample_period_k):
            self._train_step(frozen)
        return self.active

    def snapshot(self) -> TrainerSnapshot:
        if self.active is None:
            raise StateError("no period has run yet")
        return TrainerSnapshot(
            config=self.config,
            period_index=self.active.period_index,
            active_blocks=self.active.active_blocks,
            blocks_with_state=tuple(sorted(self.block_states)),
            weights_elems=self.model.parameter_count(),
            grad_elems=self._last_grad_elems,
            opt_elems=self.live_optimizer_elements(),
            activation_elems=self._last_activation_elems,
        )

    def optimizer_states(self) -> Dict[str, OptState]:
        states: Dict[str, OptState] = dict(self.unit_states)
        for index, block in self.block_states.items():
            for local, state in block.items():
                states[f"blocks.{index}.{local}"] = state
        return states

    def run(self) -> TrainLog:
        if self.plan is None:
            self.prepare()
        for period in range(self.n_periods):
            self.run_period(period)
        self.log.final_eval_loss = evaluate(self.model, self.data, n_batches=self.config.eval_batches)
        logger.info(
            "학습 완료: eval loss %.6f -> %.6f, activation counts=%s",
            self.log.initial_eval_loss,
            self.log.final_eval_loss,
            self.log.activation_counts,
        )
        return self.log


def train(config: TrainConfig, model: Model, data: TaskStream) -> Tuple[Model, TrainLog]:
    trainer = Trainer(config, model, data)
    log = trainer.run()
    return trainer.model, log


def summarize(trainer: Trainer) -> Dict[str, object]:
    """summary.json 내용. 실행 시간은 넣지 않는다."""
    log = trainer.log
    return {
        "config": trainer.config.model_dump(mode="json"),
        "initial_eval_loss": log.initial_eval_loss,
        "final_eval_loss": log.final_eval_loss,
        "initial_train_loss": log.losses[0] if log.losses else None,
        "final_train_loss": log.losses[-1] if log.losses else None,
        "activation_counts": list(log.activation_counts),
        "plan": trainer.plan.model_dump(mode="json") if trainer.plan else None,
        "profile": trainer.profile.model_dump(mode="json") if trainer.profile else None,
        "steps": len(log.losses),
        "mean_active_blocks": float(np.mean([len(a) for a in log.active_sets])) if log.active_sets else 0.0,
    }
