"""레이어별 샘플링 확률 p_ℓ 생성 (OWS 및 비교 방식)"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from owskit.errors import ConfigError, DegenerateImportanceError
from owskit.schemas import Method, OutlierProfile, SamplingPlan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanInputs:
    """확률 생성기에 넘기는 재료. 방식마다 필요한 것만 채운다."""
    n_layers: int
    profile: Optional[OutlierProfile] = None
    scores: Optional[Sequence[float]] = None


PlanBuilder = Callable[[PlanInputs, float], SamplingPlan]

# 방식 태그 -> 확률 생성기
METHOD_REGISTRY: Dict[str, PlanBuilder] = {}


def register_method(method: Method):
    """확률 생성 함수를 레지스트리에 등록하는 데코레이터."""
    def decorator(fn: PlanBuilder) -> PlanBuilder:
        METHOD_REGISTRY[method.value] = fn
        return fn
    return decorator


def _check_budget(n_layers: int, gamma: float) -> None:
    if n_layers < 1:
        raise ConfigError(f"n_layers must be at least 1: {n_layers}")
    if not 0.0 < gamma <= n_layers:
        raise ConfigError(f"gamma must lie in (0, {n_layers}]: {gamma}")


def normalize_to_budget(weights: Sequence[float], gamma: float) -> List[float]:
    """음이 아닌 가중치를 합이 γ인 확률로 바꾼다.

    1을 넘는 값은 1로 자르고 남은 질량을 자르지 않은 레이어에
    가중치 비례로 다시 나눈다. 더 이상 잘리는 값이 없을 때까지 반복.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    _check_budget(n, gamma)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("importance weights must be finite and non-negative")
    if not np.any(w > 0):
        raise DegenerateImportanceError("all importance weights are zero; cannot build a sampling plan")
    if np.all(w == w[0]):
        return [gamma / n] * n

    p = np.zeros(n)
    clipped = np.zeros(n, dtype=bool)
    remaining = float(gamma)
    while True:
        free = ~clipped
        free_sum = float(np.sum(w[free]))
        if free_sum == 0.0:
            # 남은 레이어의 가중치가 모두 0이면 균등 배분
            p[free] = remaining / int(np.count_nonzero(free))
            break
        raw = remaining * w / free_sum
        over = free & (raw > 1.0)
        if not np.any(over):
            p[free] = raw[free]
            break
        clipped |= over
        p[over] = 1.0
        remaining = gamma - float(np.count_nonzero(clipped))
        if not np.any(~clipped):
            break
    return [float(min(1.0, max(0.0, x))) for x in p]


@register_method(Method.LISA_UNIFORM)
def _lisa(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return lisa_probabilities(inputs.n_layers, gamma)


def lisa_probabilities(n_layers: int, gamma: float) -> SamplingPlan:
    """p_ℓ = γ / N_L"""
    _check_budget(n_layers, gamma)
    return SamplingPlan(method=Method.LISA_UNIFORM, gamma=gamma, p=[gamma / n_layers] * n_layers)


def _require_profile(inputs: PlanInputs) -> OutlierProfile:
    if inputs.profile is None:
        raise ConfigError("this sampling method needs an outlier profile")
    if inputs.profile.n_layers != inputs.n_layers:
        raise ConfigError(
            f"profile covers {inputs.profile.n_layers} layers, model has {inputs.n_layers}"
        )
    return inputs.profile


@register_method(Method.OWS)
def _ows(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return ows_probabilities(_require_profile(inputs), gamma)


def ows_probabilities(profile: OutlierProfile, gamma: float) -> SamplingPlan:
    """p_ℓ = γ·D_ℓ / Σ D_i (clip 후 재분배)"""
    p = normalize_to_budget(profile.d, gamma)
    return SamplingPlan(method=Method.OWS, gamma=gamma, p=p)


@register_method(Method.LISA_D)
def _lisa_d(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return lisa_d_probabilities(inputs.n_layers, gamma)


def lisa_d_probabilities(n_layers: int, gamma: float) -> SamplingPlan:
    """얕은 블록일수록 높은 선형 감소 확률. 가중치 N_L, N_L-1, ..., 1."""
    _check_budget(n_layers, gamma)
    weights = [float(n_layers - i) for i in range(n_layers)]
    return SamplingPlan(method=Method.LISA_D, gamma=gamma, p=normalize_to_budget(weights, gamma))


@register_method(Method.OWS_REVERSE)
def _reverse(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return reverse_ows_probabilities(_require_profile(inputs), gamma)


def reverse_ows_probabilities(profile: OutlierProfile, gamma: float) -> SamplingPlan:
    """가중치 max(D) + min(D) - D_ℓ. 이상치가 많은 레이어일수록 덜 뽑힌다."""
    d = np.asarray(profile.d, dtype=np.float64)
    _check_budget(d.shape[0], gamma)
    hi, lo = float(np.max(d)), float(np.min(d))
    if hi == lo:
        p = [gamma / d.shape[0]] * d.shape[0]
    else:
        p = normalize_to_budget(hi + lo - d, gamma)
    return SamplingPlan(method=Method.OWS_REVERSE, gamma=gamma, p=p)


def scores_probabilities(method: Method, scores: Sequence[float], gamma: float) -> SamplingPlan:
    """BI/RM 같은 레이어 점수를 OWS와 같은 방식으로 γ에 맞춘다."""
    return SamplingPlan(method=method, gamma=gamma, p=normalize_to_budget(scores, gamma))


def _require_scores(inputs: PlanInputs) -> Sequence[float]:
    if inputs.scores is None:
        raise ConfigError("this sampling method needs per-layer importance scores")
    if len(inputs.scores) != inputs.n_layers:
        raise ConfigError(f"got {len(inputs.scores)} scores for {inputs.n_layers} layers")
    return inputs.scores


@register_method(Method.BI)
def _bi(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return scores_probabilities(Method.BI, _require_scores(inputs), gamma)


@register_method(Method.RM)
def _rm(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return scores_probabilities(Method.RM, _require_scores(inputs), gamma)


@register_method(Method.FULL)
def _full(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return SamplingPlan(method=Method.FULL, gamma=float(inputs.n_layers), p=[1.0] * inputs.n_layers)


@register_method(Method.GALORE)
def _galore(inputs: PlanInputs, gamma: float) -> SamplingPlan:
    return SamplingPlan(method=Method.GALORE, gamma=float(inputs.n_layers), p=[1.0] * inputs.n_layers)


def build_plan(
    method: Method | str,
    gamma: float,
    inputs: PlanInputs,
    uniform_fallback: bool = False,
) -> SamplingPlan:
    """등록된 방식으로 SamplingPlan을 만든다.

    uniform_fallback=True면 중요도가 모두 0일 때 경고 후 LISA 균등 확률을 쓴다.
    """
    tag = method.value if isinstance(method, Method) else str(method)
    if tag not in METHOD_REGISTRY:
        raise ConfigError(f"Unknown sampling method: {tag}")
    try:
        return METHOD_REGISTRY[tag](inputs, gamma)
    except DegenerateImportanceError:
        if not uniform_fallback:
            raise
        logger.warning("%s: 중요도가 모두 0입니다. 균등 확률(LISA)로 대체합니다.", tag)
        uniform = lisa_probabilities(inputs.n_layers, gamma)
        return SamplingPlan(method=Method(tag), gamma=gamma, p=uniform.p)


def save_plan(plan: SamplingPlan, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(plan.model_dump(mode="json"), indent=2), encoding="utf-8")
    return target


def load_plan(path: str | Path) -> SamplingPlan:
    return SamplingPlan.model_validate_json(Path(path).read_text(encoding="utf-8"))
