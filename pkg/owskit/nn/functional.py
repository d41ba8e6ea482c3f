from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from owskit.linalg import Matrix

RMS_EPS = 1e-6
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh 근사 GELU
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_K * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_K * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)


def rms_norm(x: Matrix, gain: Matrix | None = None) -> Tuple[Matrix, Matrix]:
    """행 단위 RMS 정규화. (출력, 행별 rms) 를 반환한다."""
    r = np.sqrt(np.mean(x * x, axis=1, keepdims=True) + RMS_EPS)
    n = x / r
    if gain is not None:
        n = n * gain
    return n, r


def rms_norm_backward(
    dy: Matrix, x: Matrix, r: Matrix, gain: Matrix | None = None
) -> Tuple[Matrix, Matrix | None]:
    """rms_norm의 역전파. (dx, dgain) 을 반환한다."""
    n_hat = x / r
    if gain is None:
        dn, dgain = dy, None
    else:
        dgain = np.sum(dy * n_hat, axis=0, keepdims=True)
        dn = dy * gain
    dx = (dn - n_hat * np.mean(dn * n_hat, axis=1, keepdims=True)) / r
    return dx, dgain


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sinusoidal_positions(length: int, dim: int) -> Matrix:
    """고정 사인/코사인 위치 테이블 (파라미터 아님)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, idx / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : dim // 2])
    return table
