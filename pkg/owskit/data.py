"""합성 파인튜닝 태스크

teacher-student   고정된 무작위 teacher의 출력을 회귀 (mlp-stack)
seq-copy          토큰 시퀀스를 그대로 복사 (tiny-transformer)
layer-signal      지정 블록 S에 큰 값의 희소 구조를 심은 base 모델에서 출발해
                  S 블록에만 rank-1 변화를 준 teacher를 따라가는 태스크 (mlp-stack)

배치 i는 (seed, split, i)의 순수 함수라 호출 순서와 무관하게 재현된다.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from owskit.errors import ConfigError, FormatError
from owskit.nn import Batch, Model, backward, forward, init_model, read_bundle, write_bundle
from owskit.optim import AdamState, adam_step
from owskit.outlier import profile_model
from owskit.rng import keyed_generator
from owskit.schemas import Arch, ModelSpec, TaskKind, TaskOptions, load_spec

logger = logging.getLogger(__name__)

SPLITS: Dict[str, int] = {"train": 1, "validation": 2, "calibration": 3}
_PRETRAIN_SPLIT = 4

_BATCH_STREAM = 0xDA7A
_TEACHER_STREAM = 0x7EAC
_SIGNAL_BASE_STREAM = 0x5B00
_AUX_TEACHER_STREAM = 0xA000
_INJECT_STREAM = 0x1E7C
_PERTURB_STREAM = 0x9E27

MAX_SIGNAL_ATTEMPTS = 5
MIN_SEPARATION = 2.0
_PRETRAIN_LR = 1e-3
_SIGNAL_CALIBRATION_BATCHES = 4

DATASET_FORMAT = "owskit-dataset"

_TASK_ARCH = {
    TaskKind.TEACHER_STUDENT: Arch.MLP_STACK,
    TaskKind.SEQ_COPY: Arch.TINY_TRANSFORMER,
    TaskKind.LAYER_SIGNAL: Arch.MLP_STACK,
}


def _split_word(split: str) -> int:
    if split not in SPLITS:
        raise ConfigError(f"Unknown split: {split} (expected one of {sorted(SPLITS)})")
    return SPLITS[split]


def _regression_inputs(spec: ModelSpec, seed: int, split_word: int, index: int, batch_size: int) -> np.ndarray:
    rng = keyed_generator(seed, _BATCH_STREAM, split_word, index)
    return rng.standard_normal((batch_size, spec.d_model))


def model_outputs(model: Model, x: np.ndarray) -> np.ndarray:
    """mlp-stack 예측값. 타깃 0으로 forward하면 잔차가 곧 예측이다."""
    return forward(model, Batch(inputs=x, targets=np.zeros_like(x))).top_cache["diff"]


@dataclass
class TaskStream:
    kind: TaskKind
    spec: ModelSpec
    seed: int
    batch_size: int = 16
    teacher: Optional[Model] = None
    # layer-signal 전용
    base_model: Optional[Model] = None
    signal_blocks: Tuple[int, ...] = ()
    separation: Optional[float] = None

    def batch(self, split: str, index: int) -> Batch:
        word = _split_word(split)
        if self.kind == TaskKind.SEQ_COPY:
            rng = keyed_generator(self.seed, _BATCH_STREAM, word, index)
            tokens = rng.integers(0, self.spec.vocab, size=(self.batch_size, self.spec.seq_len))
            return Batch(inputs=tokens, targets=tokens.copy())
        x = _regression_inputs(self.spec, self.seed, word, index, self.batch_size)
        return Batch(inputs=x, targets=model_outputs(self.teacher, x))

    def batches(self, split: str, count: int, start: int = 0) -> List[Batch]:
        return [self.batch(split, start + i) for i in range(count)]

    def initial_model(self, seed: Optional[int] = None) -> Model:
        """학습 시작 모델. layer-signal은 주입된 base 모델의 사본."""
        if self.base_model is not None:
            return self.base_model.copy()
        return init_model(self.spec, self.seed if seed is None else seed)


def make_task(
    kind: TaskKind | str,
    spec: ModelSpec,
    seed: int,
    batch_size: int = 16,
    options: Optional[TaskOptions] = None,
) -> TaskStream:
    kind = TaskKind(kind)
    if spec.arch != _TASK_ARCH[kind]:
        raise ConfigError(f"task '{kind.value}' is not compatible with arch '{spec.arch.value}'")
    if kind == TaskKind.SEQ_COPY:
        return TaskStream(kind=kind, spec=spec, seed=seed, batch_size=batch_size)
    if kind == TaskKind.TEACHER_STUDENT:
        teacher = init_model(spec, seed, stream=_TEACHER_STREAM)
        return TaskStream(kind=kind, spec=spec, seed=seed, batch_size=batch_size, teacher=teacher)
    return _make_layer_signal(spec, seed, batch_size, options or TaskOptions())


# ============================================================
# layer-signal
# ============================================================

def inject_outliers(model: Model, blocks: Sequence[int], scale: float, fraction: float, rng: np.random.Generator) -> int:
    """블록 행렬마다 크기 상위 절반 중 fraction 비율의 원소를 scale배 한다. 바뀐 원소 수를 반환."""
    changed = 0
    for b in blocks:
        for w in model.blocks[b].matrices.values():
            magnitude = np.abs(w).ravel()
            candidates = np.flatnonzero(magnitude >= np.median(magnitude))
            k = min(max(1, int(round(fraction * w.size))), candidates.size)
            chosen = rng.choice(candidates, size=k, replace=False)
            rows, cols = np.unravel_index(chosen, w.shape)
            w[rows, cols] *= scale
            changed += k
    model.touch()
    return changed


def _pretrain(model: Model, aux_teacher: Model, steps: int, seed: int, batch_size: int) -> None:
    """주입 후 짧게 전체 Adam 학습해 함수를 매끄럽게 만든다."""
    states = {name: AdamState(shape=p.shape, lr=_PRETRAIN_LR) for name, p in model.named_parameters().items()}
    for step in range(steps):
        x = _regression_inputs(model.spec, seed, _PRETRAIN_SPLIT, step, batch_size)
        trace = forward(model, Batch(inputs=x, targets=model_outputs(aux_teacher, x)))
        grads = backward(model, trace)
        params = model.named_parameters()
        for name, g in grads.grads.items():
            params[name] += adam_step(states[name], g)
        model.touch()


def separation_ratio(d: Sequence[float], signal: Sequence[int]) -> float:
    """S 평균 D / 나머지 평균 D. 나머지 평균이 0이면 inf."""
    inside = [d[i] for i in signal]
    outside = [d[i] for i in range(len(d)) if i not in signal]
    mean_in = float(np.mean(inside))
    if not outside:
        return math.inf
    mean_out = float(np.mean(outside))
    if mean_out == 0.0:
        return math.inf if mean_in > 0 else 0.0
    return mean_in / mean_out


def _perturbed_teacher(base: Model, signal: Sequence[int], strength: float, rng: np.random.Generator) -> Model:
    teacher = base.copy()
    for b in signal:
        for w in teacher.blocks[b].matrices.values():
            u = rng.standard_normal(w.shape[0])
            v = rng.standard_normal(w.shape[1])
            u /= np.linalg.norm(u)
            v /= np.linalg.norm(v)
            w += strength * np.linalg.norm(w, 2) * np.outer(u, v)
    teacher.touch()
    return teacher


def _make_layer_signal(spec: ModelSpec, seed: int, batch_size: int, options: TaskOptions) -> TaskStream:
    signal = tuple(options.signal_blocks) if options.signal_blocks is not None else (spec.n_layers // 2,)
    if not signal:
        raise ConfigError("layer-signal needs at least one signal block")
    for b in signal:
        if not 0 <= b < spec.n_layers:
            raise ConfigError(f"signal block {b} out of range [0, {spec.n_layers})")

    calibration = [
        Batch(inputs=x, targets=np.zeros_like(x))
        for x in (
            _regression_inputs(spec, seed, SPLITS["calibration"], i, batch_size)
            for i in range(_SIGNAL_CALIBRATION_BATCHES)
        )
    ]

    ratio = 0.0
    for attempt in range(MAX_SIGNAL_ATTEMPTS):
        base = init_model(spec, seed, stream=_SIGNAL_BASE_STREAM + attempt)
        inject_outliers(
            base,
            signal,
            options.injection_scale,
            options.injection_fraction,
            keyed_generator(seed, _INJECT_STREAM, attempt),
        )
        aux = init_model(spec, seed, stream=_AUX_TEACHER_STREAM + attempt)
        _pretrain(base, aux, options.pretrain_steps, seed, batch_size)

        profile = profile_model(base, calibration)
        ratio = separation_ratio(profile.d, signal)
        if ratio >= MIN_SEPARATION:
            teacher = _perturbed_teacher(base, signal, options.perturbation, keyed_generator(seed, _PERTURB_STREAM, attempt))
            logger.info("layer-signal 생성: S=%s, attempt=%d, separation=%.3g", list(signal), attempt, ratio)
            return TaskStream(
                kind=TaskKind.LAYER_SIGNAL,
                spec=spec,
                seed=seed,
                batch_size=batch_size,
                teacher=teacher,
                base_model=base,
                signal_blocks=signal,
                separation=ratio,
            )
        logger.warning("layer-signal 분리도 부족 (attempt=%d, separation=%.3g). 다시 생성합니다.", attempt, ratio)

    raise ConfigError(
        f"layer-signal separation stayed below {MIN_SEPARATION} after {MAX_SIGNAL_ATTEMPTS} attempts (last {ratio:.3g})"
    )


# ============================================================
# 데이터셋 덤프
# ============================================================

def dump_dataset(stream: TaskStream, path: str | Path, counts: Mapping[str, int]) -> Path:
    """split별 배치를 manifest + blob으로 저장한다."""
    tensors: Dict[str, np.ndarray] = {}
    for split, count in counts.items():
        for i, batch in enumerate(stream.batches(split, count)):
            tensors[f"{split}.{i}.inputs"] = batch.inputs
            tensors[f"{split}.{i}.targets"] = batch.targets
    header = {
        "format": DATASET_FORMAT,
        "task": stream.kind.value,
        "seed": stream.seed,
        "batch_size": stream.batch_size,
        "spec": stream.spec.model_dump(mode="json"),
        "splits": dict(counts),
    }
    return write_bundle(path, header, tensors)


def load_dataset(path: str | Path) -> Dict[str, List[Batch]]:
    header, tensors = read_bundle(path)
    if header.get("format") != DATASET_FORMAT:
        raise FormatError(f"not a dataset dump: {header.get('format')!r}", "format")
    spec = load_spec(header.get("spec", {}))
    tokens = spec.arch == Arch.TINY_TRANSFORMER
    out: Dict[str, List[Batch]] = {}
    for split, count in header.get("splits", {}).items():
        batches = []
        for i in range(count):
            try:
                x, y = tensors[f"{split}.{i}.inputs"], tensors[f"{split}.{i}.targets"]
            except KeyError as exc:
                raise FormatError("batch missing from dataset", str(exc.args[0])) from exc
            if tokens:
                x, y = x.astype(np.int64), y.astype(np.int64)
            batches.append(Batch(inputs=x, targets=y))
        out[split] = batches
    return out
