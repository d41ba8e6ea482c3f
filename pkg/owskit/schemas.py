from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, computed_field, field_validator, model_validator

from owskit.errors import ConfigError


# ============================================================
# 열거형
# ============================================================

class Arch(str, Enum):
    """학습 대상 네트워크 구조"""
    MLP_STACK = "mlp-stack"
    TINY_TRANSFORMER = "tiny-transformer"


class Method(str, Enum):
    """레이어 샘플링/업데이트 방식"""
    OWS = "ows"
    LISA_UNIFORM = "lisa-uniform"
    LISA_D = "lisa-d"
    OWS_REVERSE = "ows-reverse"
    BI = "bi"
    RM = "rm"
    # 매 스텝 모든 블록을 학습하는 비교 기준
    FULL = "full"
    GALORE = "galore"


SAMPLING_METHODS: Tuple[Method, ...] = (
    Method.OWS,
    Method.LISA_UNIFORM,
    Method.LISA_D,
    Method.OWS_REVERSE,
    Method.BI,
    Method.RM,
)


class TaskKind(str, Enum):
    """합성 파인튜닝 태스크"""
    TEACHER_STUDENT = "teacher-student"
    SEQ_COPY = "seq-copy"
    LAYER_SIGNAL = "layer-signal"


class UpdateMode(str, Enum):
    LOW_RANK = "low-rank"
    FULL_RANK = "full-rank"


class MemoryMethod(str, Enum):
    """메모리 회계 대상 방식"""
    FULL = "full"
    LORA = "lora"
    GALORE = "galore"
    LISA = "lisa"
    OWS = "ows"


class LRSchedule(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"


class SamplingMode(str, Enum):
    # 레이어별 독립 베르누이 (기본)
    BERNOULLI = "bernoulli"
    # 정확히 floor/ceil(γ)개를 뽑는 계통 추출
    SYSTEMATIC = "systematic"


class SvdMethod(str, Enum):
    EXACT = "exact"
    RANDOMIZED = "randomized"


# 방식별 기본 업데이트 모드. LISA 계열은 샘플된 레이어를 full-rank로 학습한다.
DEFAULT_UPDATE_MODE: Dict[Method, UpdateMode] = {
    Method.OWS: UpdateMode.LOW_RANK,
    Method.OWS_REVERSE: UpdateMode.LOW_RANK,
    Method.BI: UpdateMode.LOW_RANK,
    Method.RM: UpdateMode.LOW_RANK,
    Method.GALORE: UpdateMode.LOW_RANK,
    Method.LISA_UNIFORM: UpdateMode.FULL_RANK,
    Method.LISA_D: UpdateMode.FULL_RANK,
    Method.FULL: UpdateMode.FULL_RANK,
}


# ============================================================
# 모델/학습 설정
# ============================================================

class ModelSpec(BaseModel):
    """레이어 구조 정의. n_layers는 샘플링 대상인 중간 블록 수(N_L)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    arch: Arch = Arch.MLP_STACK
    n_layers: int = Field(default=4, ge=1)
    d_model: int = Field(default=16, ge=1)
    d_hidden: int = Field(default=32, ge=1)
    # 아래 필드는 transformer 전용
    n_heads: int = Field(default=2, ge=1)
    vocab: int = Field(default=64, ge=2)
    seq_len: int = Field(default=8, ge=1)
    causal: bool = False

    @model_validator(mode="after")
    def _check_heads(self) -> "ModelSpec":
        if self.arch == Arch.TINY_TRANSFORMER and self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        return self

    def min_block_dim(self) -> int:
        """블록 내 가중치 행렬들의 최소 차원."""
        return min(self.d_model, self.d_hidden)


class TaskOptions(BaseModel):
    """layer-signal 태스크 옵션 (다른 태스크에서는 무시)."""
    model_config = ConfigDict(extra="forbid")

    signal_blocks: Optional[List[int]] = None
    injection_scale: float = Field(default=50.0, gt=1.0)
    injection_fraction: float = Field(default=0.001, gt=0.0, le=1.0)
    pretrain_steps: int = Field(default=20, ge=0)
    perturbation: float = Field(default=0.5, gt=0.0)


class TrainConfig(BaseModel):
    """학습 설정 (T, K, γ, r 포함)."""
    model_config = ConfigDict(extra="forbid")

    method: Method = Method.OWS
    gamma: float = Field(default=2.0, gt=0.0)
    rank: int = Field(default=8, ge=1)
    tau: float = Field(default=13.0, gt=0.0)
    sample_period_k: int = Field(default=20, ge=1)
    total_steps: int = Field(default=500, ge=1)
    lr: float = Field(default=3e-4, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0)
    refresh_every: int = Field(default=20, ge=1)
    task: TaskKind = TaskKind.TEACHER_STUDENT
    task_options: TaskOptions = Field(default_factory=TaskOptions)
    model: ModelSpec = Field(default_factory=ModelSpec)
    log_every: int = Field(default=1, ge=1)
    batch_size: int = Field(default=16, ge=1)
    calibration_batches: int = Field(default=4, ge=1)
    eval_batches: int = Field(default=4, ge=1)
    update_mode: Optional[UpdateMode] = None
    lr_schedule: LRSchedule = LRSchedule.CONSTANT
    sampling_mode: SamplingMode = SamplingMode.BERNOULLI
    svd_method: SvdMethod = SvdMethod.EXACT
    projection_scale: float = Field(default=1.0, gt=0.0)
    # 모멘트 없는 진단용 SGD 모드
    sgd: bool = False
    reprofile_every: Optional[int] = Field(default=None, ge=1)
    retain_dormant_state: bool = False
    # 중요도가 모두 0이면 경고 후 균등 확률 사용 (False면 ConfigError)
    uniform_fallback: bool = True

    @model_validator(mode="after")
    def _check_budget(self) -> "TrainConfig":
        if self.gamma > self.model.n_layers:
            raise ValueError(
                f"gamma ({self.gamma}) must not exceed n_layers ({self.model.n_layers})"
            )
        if self.total_steps % self.sample_period_k != 0:
            raise ValueError(
                f"total_steps ({self.total_steps}) must be divisible by "
                f"sample_period_k ({self.sample_period_k})"
            )
        if self.resolved_update_mode() == UpdateMode.LOW_RANK and self.rank > self.model.min_block_dim():
            raise ValueError(
                f"rank ({self.rank}) exceeds the smallest block matrix dimension "
                f"({self.model.min_block_dim()})"
            )
        return self

    def resolved_update_mode(self) -> UpdateMode:
        """update_mode가 비어 있으면 방식별 기본값을 쓴다."""
        return self.update_mode or DEFAULT_UPDATE_MODE[self.method]

    def effective_gamma(self) -> float:
        """full/galore는 매 스텝 모든 블록을 학습한다."""
        if self.method in (Method.FULL, Method.GALORE):
            return float(self.model.n_layers)
        return self.gamma


class RunConfigFile(TrainConfig):
    """CLI 설정 파일. TrainConfig + 입출력 경로."""

    out_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    bytes_per_elem: int = Field(default=4, ge=1)

    def train_config(self) -> TrainConfig:
        data = self.model_dump(exclude={"out_dir", "checkpoint", "bytes_per_elem"})
        return TrainConfig.model_validate(data)


# 데스크 규모 기본값과 대규모 모델용 기본값 (후자는 기록용)
DESK_PRESET: Dict[str, Any] = {
    "gamma": 2.0,
    "rank": 8,
    "tau": 13.0,
    "lr": 3e-4,
    "sample_period_k": 20,
    "total_steps": 500,
    "refresh_every": 20,
}

LARGE_PRESET: Dict[str, Any] = {
    "gamma": 5.0,
    "rank": 128,
    "tau": 13.0,
    "lr": 3e-4,
    "refresh_every": 200,
}


def load_spec(data: Dict[str, Any]) -> ModelSpec:
    """dict로부터 ModelSpec을 만든다. 검증 실패는 ConfigError로 바꾼다."""
    arch = data.get("arch")
    if arch is not None and arch not in {a.value for a in Arch}:
        raise ConfigError(f"Unknown arch tag: {arch}")
    try:
        return ModelSpec.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid model spec: {exc}") from exc


# ============================================================
# 분석 결과 레코드
# ============================================================

class OutlierProfile(BaseModel):
    """레이어별 이상치 비율 D_ℓ와 그 원시 카운트."""

    tau: float = Field(gt=0.0)
    d: List[float]
    counts: List[Tuple[int, int]]

    @model_validator(mode="after")
    def _check_ratios(self) -> "OutlierProfile":
        if len(self.d) != len(self.counts):
            raise ValueError("d and counts must have the same length")
        for ratio, (num, den) in zip(self.d, self.counts):
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"outlier ratio out of [0, 1]: {ratio}")
            if num < 0 or den <= 0 or num > den:
                raise ValueError(f"invalid outlier counts: {(num, den)}")
        return self

    @property
    def n_layers(self) -> int:
        return len(self.d)

    def argmax(self) -> int:
        return max(range(len(self.d)), key=lambda i: self.d[i])


class SamplingPlan(BaseModel):
    """레이어별 활성 확률 p_ℓ. embedding/head는 항상 학습한다."""

    method: Method
    gamma: float = Field(gt=0.0)
    p: List[float]
    always_active: List[str] = Field(default_factory=lambda: ["embedding", "head"], exclude=True)

    @field_validator("p")
    @classmethod
    def _check_range(cls, p: List[float]) -> List[float]:
        for value in p:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"probability out of [0, 1]: {value}")
        return p

    @model_validator(mode="after")
    def _check_budget(self) -> "SamplingPlan":
        total = sum(self.p)
        if abs(total - self.gamma) > 1e-9 * max(1.0, self.gamma):
            raise ValueError(f"sum(p) = {total} does not match gamma = {self.gamma}")
        return self

    @property
    def n_layers(self) -> int:
        return len(self.p)


class MemoryReport(BaseModel):
    """방식별 원소 수 기반 메모리 리포트."""

    method: MemoryMethod
    weights_elems: int = Field(ge=0)
    grad_elems: int = Field(ge=0)
    opt_elems: int = Field(ge=0)
    activation_elems: int = Field(ge=0)
    bytes_per_elem: int = Field(default=4, ge=1)

    @computed_field  # type: ignore[misc]
    @property
    def total_elems(self) -> int:
        return self.weights_elems + self.grad_elems + self.opt_elems + self.activation_elems

    @computed_field  # type: ignore[misc]
    @property
    def total_bytes(self) -> int:
        return self.bytes_per_elem * self.total_elems
