"""주기별 활성 블록 집합 추출"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from owskit.rng import keyed_generator
from owskit.schemas import SamplingMode, SamplingPlan

# 샘플링 난수 스트림 구분용 워드
_SAMPLING_STREAM = 0x5A31


@dataclass(frozen=True)
class ActiveSet:
    period_index: int
    active_blocks: Tuple[int, ...]
    drawn_from: SamplingPlan

    def __contains__(self, index: object) -> bool:
        return index in self.active_blocks

    def __len__(self) -> int:
        return len(self.active_blocks)

    def frozen_blocks(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.drawn_from.n_layers) if i not in self.active_blocks)

    def label(self) -> str:
        """log.csv 표기. 예: '0;2'"""
        return ";".join(str(i) for i in self.active_blocks)


def draw_active_set(
    plan: SamplingPlan,
    seed: int,
    period_index: int,
    mode: SamplingMode | str = SamplingMode.BERNOULLI,
) -> ActiveSet:
    """(seed, period) 키 스트림에서 블록 ℓ의 균등 난수 u_ℓ을 꺼내 u_ℓ < p_ℓ이면 활성.

    systematic 모드는 난수 하나와 누적합으로 정확히 ⌊γ⌋ 또는 ⌈γ⌉개를 뽑는다.
    각 블록의 주변 확률은 두 모드 모두 p_ℓ이다.
    """
    rng = keyed_generator(seed, _SAMPLING_STREAM, period_index)
    p = np.asarray(plan.p, dtype=np.float64)

    if SamplingMode(mode) == SamplingMode.SYSTEMATIC:
        u = float(rng.random())
        upper = np.cumsum(p)
        lower = upper - p
        hits = [math.floor(hi - u) - math.floor(lo - u) for lo, hi in zip(lower, upper)]
        active = tuple(i for i, h in enumerate(hits) if h > 0)
    else:
        u = rng.random(p.shape[0])
        active = tuple(int(i) for i in np.flatnonzero(u < p))

    return ActiveSet(period_index=period_index, active_blocks=active, drawn_from=plan)
