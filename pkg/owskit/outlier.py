"""활성값 가중 이상치 점수와 레이어별 이상치 분포 D_ℓ"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from owskit.errors import ConfigError, ShapeError, StateError
from owskit.linalg import Matrix, as_matrix
from owskit.nn import Batch, Model, block_param_name, forward
from owskit.schemas import OutlierProfile

logger = logging.getLogger(__name__)

DEFAULT_TAU = 13.0
AGGREGATION_MODES = ("l2", "rms")


@dataclass
class CalibrationStats:
    """가중치 행렬별 입력 특징 열 노름 ‖X_j‖₂ 의 누적 통계."""
    sq_sums: Dict[str, NDArray[np.float64]] = field(default_factory=dict)
    rows: int = 0
    batches: int = 0
    mode: str = "l2"

    def norms(self, name: str) -> NDArray[np.float64]:
        if name not in self.sq_sums:
            raise StateError(f"No calibration statistics for matrix '{name}'")
        norms = np.sqrt(self.sq_sums[name])
        if self.mode == "rms":
            norms = norms / np.sqrt(self.rows)
        return norms

    def add(self, name: str, x: Matrix) -> None:
        # 행을 쌓아 열 노름을 구하는 것과 같다 (제곱합이 가산적이므로)
        sq = np.einsum("ij,ij->j", x, x)
        if name in self.sq_sums:
            self.sq_sums[name] = self.sq_sums[name] + sq
        else:
            self.sq_sums[name] = sq


def calibrate(model: Model, batches: Sequence[Batch], mode: str = "l2") -> CalibrationStats:
    """보정 배치를 흘려 각 블록 행렬 입력의 열 노름을 스트리밍으로 누적한다."""
    if not batches:
        raise ConfigError("calibrate needs at least one batch")
    if mode not in AGGREGATION_MODES:
        raise ConfigError(f"Unknown aggregation mode: {mode}")

    stats = CalibrationStats(mode=mode)
    for batch in batches:
        trace = forward(model, batch)
        rows = 0
        for name, x in trace.matrix_inputs():
            stats.add(name, x)
            rows = x.shape[0]
        stats.rows += rows
        stats.batches += 1
    logger.debug("보정 완료: batches=%d, rows=%d, matrices=%d", stats.batches, stats.rows, len(stats.sq_sums))
    return stats


def outlier_scores(w: Matrix, norms: Sequence[float]) -> Matrix:
    """A_ij = ‖X_j‖₂ · |W_ij|"""
    w = as_matrix(w, "w")
    norms = np.asarray(norms, dtype=np.float64)
    if norms.ndim != 1 or norms.shape[0] != w.shape[1]:
        raise ShapeError(f"norms length {norms.shape} does not match C_in = {w.shape[1]}")
    return np.abs(w) * norms[None, :]


def layer_outlier_ratio(scores: Sequence[Matrix], tau: float) -> Tuple[float, int, int]:
    """레이어 내 모든 행렬을 하나의 모집단으로 보고 A > τ·Ā 인 원소 비율을 센다.

    Ā는 레이어 전체 원소의 평균이다 (행렬별 평균의 평균이 아님).
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive: {tau}")
    if not scores or all(np.asarray(s).size == 0 for s in scores):
        raise ConfigError("layer_outlier_ratio needs at least one non-empty score matrix")

    den = int(sum(np.asarray(s).size for s in scores))
    mean = sum(float(np.sum(s)) for s in scores) / den
    threshold = tau * mean
    num = int(sum(int(np.count_nonzero(np.asarray(s) > threshold)) for s in scores))
    return num / den, num, den


def build_profile(model: Model, stats: CalibrationStats, tau: float = DEFAULT_TAU) -> OutlierProfile:
    """블록마다 D_ℓ을 구한다. embedding/head는 항상 학습되므로 제외."""
    d: List[float] = []
    counts: List[Tuple[int, int]] = []
    for i, block in enumerate(model.blocks):
        scores = [
            outlier_scores(w, stats.norms(block_param_name(i, name)))
            for name, w in block.matrices.items()
        ]
        ratio, num, den = layer_outlier_ratio(scores, tau)
        d.append(ratio)
        counts.append((num, den))
    return OutlierProfile(tau=tau, d=d, counts=counts)


def profile_model(model: Model, batches: Sequence[Batch], tau: float = DEFAULT_TAU) -> OutlierProfile:
    """calibrate + build_profile"""
    return build_profile(model, calibrate(model, batches), tau)


def format_profile_table(profile: OutlierProfile) -> str:
    lines = [f"{'layer':>5}  {'D':>10}  {'outliers':>9}  {'elements':>9}"]
    for i, (ratio, (num, den)) in enumerate(zip(profile.d, profile.counts)):
        lines.append(f"{i:>5}  {ratio:>10.6f}  {num:>9d}  {den:>9d}")
    return "\n".join(lines)


def save_profile(profile: OutlierProfile, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(profile.model_dump(mode="json"), indent=2), encoding="utf-8")
    return target


def load_profile(path: str | Path) -> OutlierProfile:
    return OutlierProfile.model_validate_json(Path(path).read_text(encoding="utf-8"))
