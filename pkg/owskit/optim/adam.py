"""편향 보정 Adam (그리고 진단용 모멘트 없는 SGD 모드)"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from owskit.errors import ShapeError
from owskit.linalg import Matrix


@dataclass
class AdamState:
    shape: Tuple[int, int]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sgd: bool = False
    step: int = 0
    m: Optional[Matrix] = field(default=None, repr=False)
    v: Optional[Matrix] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.shape = (int(self.shape[0]), int(self.shape[1]))
        if not self.sgd:
            if self.m is None:
                self.m = np.zeros(self.shape)
            if self.v is None:
                self.v = np.zeros(self.shape)

    def state_elements(self) -> int:
        """모멘트 원소 수. SGD 모드는 0."""
        if self.sgd:
            return 0
        return 2 * self.shape[0] * self.shape[1]


def adam_step(state: AdamState, g: Matrix, lr: Optional[float] = None) -> Matrix:
    """업데이트 Δ를 반환한다 (파라미터에 더할 값). lr을 주면 state.lr 대신 쓴다."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match optimizer state {state.shape}")
    lr = state.lr if lr is None else lr
    state.step += 1

    if state.sgd:
        return -lr * g

    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return -lr * m_hat / (np.sqrt(v_hat) + state.eps)
