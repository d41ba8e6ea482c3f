"""밀집 행렬 연산과 절단 SVD"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from owskit.errors import NonFiniteError, RankError, ShapeError
from owskit.rng import keyed_generator
from owskit.schemas import SvdMethod

# 모든 내부 계산은 float64 2차원 배열로 한다.
Matrix = NDArray[np.float64]


def as_matrix(x: object, name: str = "matrix") -> Matrix:
    """2차원 float64 배열로 변환하고 유한성을 검사한다."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def column_l2_norms(x: Matrix) -> NDArray[np.float64]:
    """열마다 sqrt(Σᵢ x[i, j]²)."""
    x = as_matrix(x, "x")
    if x.size == 0:
        raise ShapeError("column_l2_norms needs a non-empty matrix")
    return np.sqrt(np.einsum("ij,ij->j", x, x))


def orthonormality_error(q: Matrix) -> float:
    """‖QᵀQ − I‖의 최대 원소."""
    gram = q.T @ q
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


@dataclass(frozen=True)
class TruncatedSVD:
    u: Matrix  # m × r
    s: NDArray[np.float64]  # r, 내림차순
    v: Matrix  # n × r

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> Matrix:
        return (self.u * self.s) @ self.v.T


def truncated_svd(
    m: Matrix,
    r: int,
    method: SvdMethod | str = SvdMethod.EXACT,
    n_iter: int = 4,
    oversample: int = 8,
    seed: int = 0,
) -> TruncatedSVD:
    """상위 r개 특이값/특이벡터를 구한다.

    exact는 LAPACK SVD를 자르고, randomized는 range finder +
    subspace iteration으로 근사 기저를 얻은 뒤 작은 행렬을 분해한다.
    """
    m = as_matrix(m, "m")
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise RankError(f"rank {r} out of range [1, {min(rows, cols)}] for shape {m.shape}")

    if SvdMethod(method) == SvdMethod.RANDOMIZED:
        u, s, vt = _randomized_svd(m, r, n_iter=n_iter, oversample=oversample, seed=seed)
    else:
        u, s, vt = np.linalg.svd(m, full_matrices=False)

    return TruncatedSVD(u=np.ascontiguousarray(u[:, :r]), s=s[:r].copy(), v=np.ascontiguousarray(vt[:r].T))


def _randomized_svd(m: Matrix, r: int, n_iter: int, oversample: int, seed: int):
    rows, cols = m.shape
    n_samples = min(r + oversample, min(rows, cols))
    omega = keyed_generator(seed, rows, cols).standard_normal((cols, n_samples))
    q, _ = np.linalg.qr(m @ omega)
    for _ in range(n_iter):
        z, _ = np.linalg.qr(m.T @ q)
        q, _ = np.linalg.qr(m @ z)
    u_small, s, vt = np.linalg.svd(q.T @ m, full_matrices=False)
    return q @ u_small, s, vt
