"""레이어 중요도 지표 BI / RM

두 지표 모두 외부 정의를 따른다.
    BI_ℓ = 1 - mean_rows cos(x_in, x_out)
    RM_ℓ = mean_rows ‖f(x)‖ / ‖x + f(x)‖,  f(x) = x_out - x_in (잔차 가지)
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from owskit.errors import ConfigError, ShapeError
from owskit.linalg import Matrix
from owskit.nn import Batch, Model, forward


def _check_pair(x_in: Matrix, x_out: Matrix) -> None:
    if x_in.shape != x_out.shape or x_in.ndim != 2:
        raise ShapeError(f"block input/output shapes differ: {x_in.shape} vs {x_out.shape}")


def _row_cosines(x_in: Matrix, x_out: Matrix) -> np.ndarray:
    _check_pair(x_in, x_out)
    dots = np.einsum("ij,ij->i", x_in, x_out)
    denom = np.linalg.norm(x_in, axis=1) * np.linalg.norm(x_out, axis=1)
    # 둘 다 0인 행은 같은 벡터로 본다
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, dots / safe, 1.0)


def _row_ratios(x_in: Matrix, x_out: Matrix) -> np.ndarray:
    _check_pair(x_in, x_out)
    branch = np.linalg.norm(x_out - x_in, axis=1)
    total = np.linalg.norm(x_out, axis=1)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, branch / safe, 0.0)


def block_influence(x_in: Matrix, x_out: Matrix) -> float:
    return float(1.0 - np.mean(_row_cosines(x_in, x_out)))


def relative_magnitude(x_in: Matrix, x_out: Matrix) -> float:
    return float(np.mean(_row_ratios(x_in, x_out)))


def _accumulate(model: Model, batches: Sequence[Batch], per_row) -> List[float]:
    if not batches:
        raise ConfigError("importance scoring needs at least one batch")
    sums = np.zeros(model.spec.n_layers)
    rows = 0
    for batch in batches:
        trace = forward(model, batch)
        for i in range(model.spec.n_layers):
            x_in, x_out = trace.block_io(i)
            sums[i] += float(np.sum(per_row(x_in, x_out)))
        rows += trace.block_caches[0]["h"].shape[0]
    return [float(s / rows) for s in sums]


def bi_scores(model: Model, batches: Sequence[Batch]) -> List[float]:
    """전체 보정 행에 대한 평균. 배치별 평균의 평균이 아니다."""
    cos = _accumulate(model, batches, _row_cosines)
    return [1.0 - c for c in cos]


def rm_scores(model: Model, batches: Sequence[Batch]) -> List[float]:
    return _accumulate(model, batches, _row_ratios)

