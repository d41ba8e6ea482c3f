"""그래디언트 저랭크 투영 Adam

작은 쪽 차원이 투영 행렬을 가진다.
    rows <= cols:  P = U_r (rows × r),  투영 Pᵀ·G (r × cols),  복원 P·R
    rows >  cols:  P = V_r (cols × r),  투영 G·P (rows × r),   복원 R·Pᵀ
투영 행렬은 이 행렬이 실제로 업데이트된 횟수(active_steps)가 refresh_every의
배수일 때 현재 그래디언트의 SVD로 다시 구한다. Adam 모멘트는 교체 후에도 유지.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from owskit.errors import RankError, ShapeError, StateError
from owskit.linalg import Matrix, as_matrix, truncated_svd
from owskit.optim.adam import AdamState, adam_step
from owskit.schemas import SvdMethod

logger = logging.getLogger(__name__)


class ProjectionSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"


def projection_side(shape: Tuple[int, int]) -> ProjectionSide:
    return ProjectionSide.LEFT if shape[0] <= shape[1] else ProjectionSide.RIGHT


def projector_shape(shape: Tuple[int, int], rank: int) -> Tuple[int, int]:
    return (min(shape), rank)


def projected_shape(shape: Tuple[int, int], rank: int) -> Tuple[int, int]:
    if projection_side(shape) == ProjectionSide.LEFT:
        return (rank, shape[1])
    return (shape[0], rank)


def low_rank_state_elements(shape: Tuple[int, int], rank: int, sgd: bool = False) -> int:
    """투영 행렬 + 2 × 투영된 모양."""
    pr, pc = projector_shape(shape, rank)
    qr, qc = projected_shape(shape, rank)
    moments = 0 if sgd else 2 * qr * qc
    return pr * pc + moments


def compute_projector(
    g: Matrix,
    r: int,
    method: SvdMethod | str = SvdMethod.EXACT,
    seed: int = 0,
) -> Matrix:
    g = as_matrix(g, "gradient")
    svd = truncated_svd(g, r, method=method, seed=seed)
    if projection_side(g.shape) == ProjectionSide.LEFT:
        return svd.u
    return svd.v


@dataclass
class LowRankOptState:
    shape: Tuple[int, int]
    rank: int
    adam: AdamState
    refresh_every: int = 200
    scale: float = 1.0
    svd_method: SvdMethod = SvdMethod.EXACT
    seed: int = 0
    active_steps: int = 0
    projector: Optional[Matrix] = field(default=None, repr=False)

    @classmethod
    def create(
        cls,
        shape: Tuple[int, int],
        rank: int,
        refresh_every: int = 200,
        scale: float = 1.0,
        svd_method: SvdMethod | str = SvdMethod.EXACT,
        seed: int = 0,
        **adam_kwargs,
    ) -> "LowRankOptState":
        shape = (int(shape[0]), int(shape[1]))
        if not 1 <= rank <= min(shape):
            raise RankError(f"rank {rank} out of range [1, {min(shape)}] for shape {shape}")
        adam = AdamState(shape=projected_shape(shape, rank), **adam_kwargs)
        return cls(
            shape=shape,
            rank=rank,
            adam=adam,
            refresh_every=refresh_every,
            scale=scale,
            svd_method=SvdMethod(svd_method),
            seed=seed,
        )

    @property
    def side(self) -> ProjectionSide:
        return projection_side(self.shape)

    def state_elements(self) -> int:
        return low_rank_state_elements(self.shape, self.rank, sgd=self.adam.sgd)


def project(g: Matrix, state: LowRankOptState) -> Matrix:
    if state.projector is None:
        raise StateError("projector not initialized; call low_rank_step or set a projector first")
    if g.shape != state.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state {state.shape}")
    if state.side == ProjectionSide.LEFT:
        return state.projector.T @ g
    return g @ state.projector


def project_back(u: Matrix, state: LowRankOptState) -> Matrix:
    if state.projector is None:
        raise StateError("projector not initialized")
    expected = projected_shape(state.shape, state.rank)
    if u.shape != expected:
        raise ShapeError(f"low-rank update shape {u.shape} != {expected}")
    if state.side == ProjectionSide.LEFT:
        return state.projector @ u
    return u @ state.projector.T


def refresh_projector(state: LowRankOptState, g: Matrix) -> None:
    state.projector = compute_projector(
        g, state.rank, method=state.svd_method, seed=state.seed + state.active_steps
    )


def low_rank_step(state: LowRankOptState, g: Matrix, lr: Optional[float] = None) -> Matrix:
    """refresh(필요 시) → project → adam_step → project_back. 전체 모양의 Δ를 반환."""
    g = as_matrix(g, "gradient")
    if g.shape != state.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state {state.shape}")
    if state.active_steps % state.refresh_every == 0:
        refresh_projector(state, g)
        logger.debug("projector refresh: shape=%s, active_steps=%d", state.shape, state.active_steps)
    update = adam_step(state.adam, project(g, state), lr=lr)
    state.active_steps += 1
    return state.scale * project_back(update, state)
