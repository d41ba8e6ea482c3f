"""원소 수 단위 메모리 회계 (weights / gradients / optimizer / activations)

샘플링 방식은 기대값 모드(γ개 블록, 항목별 올림)와 실현 모드(주어진 활성 집합)를 지원한다.
프레임워크 오버헤드, 단편화, 그래디언트 체크포인팅은 모델링하지 않는다.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Collection, Dict, Iterable, List, Optional, Sequence, Tuple

from owskit.errors import ConfigError
from owskit.nn import get_arch
from owskit.optim import low_rank_state_elements
from owskit.schemas import MemoryMethod, MemoryReport, Method, ModelSpec, TrainConfig, UpdateMode

REPORT_COLUMNS = ("method", "weights_elems", "grad_elems", "opt_elems", "activation_elems", "total_elems", "total_bytes")
_LOW_RANK_METHODS = (MemoryMethod.LORA, MemoryMethod.GALORE, MemoryMethod.OWS)


def memory_method_for(config: TrainConfig) -> MemoryMethod:
    """학습 설정에 대응하는 회계 방식. 샘플링 방식은 업데이트 모드로 LISA/OWS가 갈린다."""
    if config.method == Method.FULL:
        return MemoryMethod.FULL
    if config.method == Method.GALORE:
        return MemoryMethod.GALORE
    if config.resolved_update_mode() == UpdateMode.FULL_RANK:
        return MemoryMethod.LISA
    return MemoryMethod.OWS


def lora_adapter_elements(shape: Tuple[int, int], rank: int) -> int:
    """A (r × n) + B (m × r)"""
    return rank * (shape[0] + shape[1])


def _check_rank(spec: ModelSpec, rank: int) -> None:
    if not 1 <= rank <= spec.min_block_dim():
        raise ConfigError(f"rank {rank} out of range [1, {spec.min_block_dim()}] for this model")


def _scaled(count: float, per_block: int) -> int:
    return int(math.ceil(count * per_block))


def account(
    spec: ModelSpec,
    method: MemoryMethod | str,
    rank: int = 8,
    gamma: float = 2.0,
    batch_size: int = 16,
    bytes_per_elem: int = 4,
    active_blocks: Optional[Collection[int]] = None,
) -> MemoryReport:
    """방식별 최대 점유 원소 수를 해석적으로 계산한다.

    active_blocks가 주어지면 그 블록 수를, 아니면 γ를 활성 블록 수로 쓴다.
    full/galore/lora는 모든 블록을 대상으로 한다.
    """
    method = MemoryMethod(method)
    if method in _LOW_RANK_METHODS:
        _check_rank(spec, rank)
    if active_blocks is None and not 0.0 < gamma <= spec.n_layers:
        raise ConfigError(f"gamma must lie in (0, {spec.n_layers}]: {gamma}")

    arch = get_arch(spec.arch)
    shapes = list(arch.matrix_shapes(spec).values())
    params = arch.parameter_count(spec)
    block = arch.block_element_count(spec)
    gains = len(arch.NORM_NAMES) * spec.d_model
    er, ec = arch.embedding_shape(spec)
    hr, hc = arch.head_shape(spec)
    units = er * ec + hr * hc
    activations = arch.cache_elements(spec, batch_size)
    n = spec.n_layers
    k = float(gamma) if active_blocks is None else float(len(set(active_blocks)))

    low_rank_block = sum(low_rank_state_elements(s, rank) for s in shapes) + 2 * gains

    if method == MemoryMethod.FULL:
        weights, grad, opt = params, params, 2 * params
    elif method == MemoryMethod.LISA:
        weights = params
        grad = _scaled(k, block) + units
        opt = 2 * _scaled(k, block) + 2 * units
    elif method == MemoryMethod.OWS:
        weights = params
        grad = _scaled(k, block) + units
        opt = _scaled(k, low_rank_block) + 2 * units
    elif method == MemoryMethod.GALORE:
        weights, grad = params, params
        opt = n * low_rank_block + 2 * units
    else:
        adapters = n * sum(lora_adapter_elements(s, rank) for s in shapes)
        rows = arch.rows_per_batch(spec, batch_size)
        weights = params + adapters
        grad = adapters
        opt = 2 * adapters
        # 어댑터 중간값 (rows × r) 을 행렬마다 추가로 보관
        activations += n * len(shapes) * rows * rank

    return MemoryReport(
        method=method,
        weights_elems=weights,
        grad_elems=grad,
        opt_elems=opt,
        activation_elems=activations,
        bytes_per_elem=bytes_per_elem,
    )


def account_for(config: TrainConfig, bytes_per_elem: int = 4, active_blocks: Optional[Collection[int]] = None) -> MemoryReport:
    return account(
        config.model,
        memory_method_for(config),
        rank=config.rank,
        gamma=config.effective_gamma(),
        batch_size=config.batch_size,
        bytes_per_elem=bytes_per_elem,
        active_blocks=active_blocks,
    )


def measure_live(snapshot, bytes_per_elem: int = 4) -> MemoryReport:
    """TrainerSnapshot의 실제 점유량."""
    return MemoryReport(
        method=memory_method_for(snapshot.config),
        weights_elems=snapshot.weights_elems,
        grad_elems=snapshot.grad_elems,
        opt_elems=snapshot.opt_elems,
        activation_elems=snapshot.activation_elems,
        bytes_per_elem=bytes_per_elem,
    )


def compare_methods(
    spec: ModelSpec,
    rank: int,
    gamma: float,
    batch_size: int,
    bytes_per_elem: int = 4,
) -> List[MemoryReport]:
    return [account(spec, m, rank=rank, gamma=gamma, batch_size=batch_size, bytes_per_elem=bytes_per_elem) for m in MemoryMethod]


def memory_sweep(
    spec: ModelSpec,
    gammas: Sequence[float],
    ranks: Sequence[int],
    batch_size: int,
    bytes_per_elem: int = 4,
) -> List[Dict[str, object]]:
    """방식 × γ × r 조합마다 한 행."""
    rows: List[Dict[str, object]] = []
    for method in MemoryMethod:
        for gamma in gammas:
            for rank in ranks:
                report = account(spec, method, rank=rank, gamma=gamma, batch_size=batch_size, bytes_per_elem=bytes_per_elem)
                rows.append({"gamma": gamma, "rank": rank, **_report_row(report)})
    return rows


def _report_row(report: MemoryReport) -> Dict[str, object]:
    data = report.model_dump(mode="json")
    return {col: data[col] for col in REPORT_COLUMNS}


def render_table(reports: Iterable[MemoryReport]) -> str:
    rows = [[str(v) for v in _report_row(r).values()] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(REPORT_COLUMNS)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(REPORT_COLUMNS, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def reports_to_csv(rows: Sequence[Dict[str, object]]) -> str:
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()
