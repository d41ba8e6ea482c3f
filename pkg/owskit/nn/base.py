"""모델 공통 타입과 구조(arch) 레지스트리"""

from __future__ import annotations

import copy
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Collection, Dict, Iterator, List, Tuple, Type

import numpy as np

from owskit.errors import ConfigError, ShapeError, StateError
from owskit.linalg import Matrix
from owskit.rng import keyed_generator
from owskit.schemas import Arch, ModelSpec

# init_model 난수 스트림 구분용 워드
_INIT_STREAM = 0x1A17


@dataclass(frozen=True)
class Batch:
    """mlp-stack: (B, d_model) 실수 입력/타깃. tiny-transformer: (B, L) 토큰 입력/타깃."""
    inputs: np.ndarray
    targets: np.ndarray

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


@dataclass
class Block:
    matrices: Dict[str, Matrix]
    norm_params: Dict[str, Matrix]

    def parameters(self) -> Dict[str, Matrix]:
        return {**self.matrices, **self.norm_params}

    def element_count(self) -> int:
        return sum(p.size for p in self.parameters().values())


@dataclass
class Model:
    """embedding(항상 학습) + N_L개 블록(샘플링 대상) + head(항상 학습)."""
    spec: ModelSpec
    embedding: Matrix
    blocks: List[Block]
    head: Matrix
    # 파라미터를 바꿀 때마다 올린다. 오래된 ForwardTrace 감지용.
    version: int = 0

    def __post_init__(self) -> None:
        validate_model(self)

    def named_parameters(self) -> Dict[str, Matrix]:
        params: Dict[str, Matrix] = {"embedding": self.embedding}
        for i, block in enumerate(self.blocks):
            for name, value in block.parameters().items():
                params[block_param_name(i, name)] = value
        params["head"] = self.head
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def block_param_name(index: int, name: str) -> str:
    return f"blocks.{index}.{name}"


def parse_param_name(full_name: str) -> Tuple[int | None, str]:
    """'blocks.3.w1' -> (3, 'w1'), 'head' -> (None, 'head')."""
    if full_name.startswith("blocks."):
        _, index, name = full_name.split(".", 2)
        return int(index), name
    return None, full_name


@dataclass
class ForwardTrace:
    """forward 결과. 역전파와 이상치 보정에 쓰는 캐시를 담는다."""
    loss: float
    block_caches: List[Dict[str, np.ndarray]]
    top_cache: Dict[str, np.ndarray]
    input_keys: Dict[str, str]
    model_id: int
    model_version: int

    def matrix_inputs(self) -> Iterator[Tuple[str, Matrix]]:
        """(파라미터 이름, 그 행렬의 입력 X) 쌍. X는 (행 수, C_in)."""
        for i, cache in enumerate(self.block_caches):
            for name, key in self.input_keys.items():
                yield block_param_name(i, name), cache[key]

    def block_io(self, index: int) -> Tuple[Matrix, Matrix]:
        """블록 index의 (입력, 출력) 활성값."""
        x_in = self.block_caches[index]["h"]
        if index + 1 < len(self.block_caches):
            x_out = self.block_caches[index + 1]["h"]
        else:
            x_out = self.top_cache["h_final"]
        return x_in, x_out

    def cached_elements(self) -> int:
        total = sum(a.size for cache in self.block_caches for a in cache.values())
        return total + sum(a.size for a in self.top_cache.values())


@dataclass
class GradientSet:
    grads: Dict[str, Matrix] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Matrix:
        return self.grads[name]

    def __contains__(self, name: object) -> bool:
        return name in self.grads

    def element_count(self) -> int:
        return sum(g.size for g in self.grads.values())

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet({k: v * factor for k, v in self.grads.items()})


class BaseArch(ABC):
    """구조별 구현의 부모 클래스. @register_arch로 등록한다."""

    # 블록 행렬 이름 -> 그 행렬 입력이 담긴 캐시 키
    INPUT_KEYS: Dict[str, str] = {}
    NORM_NAMES: Tuple[str, ...] = ()

    @abstractmethod
    def matrix_shapes(self, spec: ModelSpec) -> Dict[str, Tuple[int, int]]:
        """블록 하나의 가중치 행렬 모양 (C_out, C_in)."""

    @abstractmethod
    def embedding_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        ...

    @abstractmethod
    def head_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        ...

    @abstractmethod
    def forward(self, model: Model, batch: Batch) -> ForwardTrace:
        ...

    @abstractmethod
    def backward(
        self,
        model: Model,
        trace: ForwardTrace,
        frozen: Collection[int],
        include_units: bool,
        loss_scale: float,
    ) -> GradientSet:
        ...

    @abstractmethod
    def cache_elements(self, spec: ModelSpec, batch_size: int) -> int:
        """forward가 역전파용으로 남기는 캐시 원소 수 (해석적)."""

    @abstractmethod
    def rows_per_batch(self, spec: ModelSpec, batch_size: int) -> int:
        ...

    def block_element_count(self, spec: ModelSpec) -> int:
        matrices = sum(r * c for r, c in self.matrix_shapes(spec).values())
        return matrices + len(self.NORM_NAMES) * spec.d_model

    def parameter_count(self, spec: ModelSpec) -> int:
        er, ec = self.embedding_shape(spec)
        hr, hc = self.head_shape(spec)
        return er * ec + hr * hc + spec.n_layers * self.block_element_count(spec)


# 구조 클래스 레지스트리
ARCH_REGISTRY: Dict[str, Type[BaseArch]] = {}


def register_arch(arch: Arch):
    """구조 구현 클래스를 레지스트리에 등록하는 데코레이터."""
    def decorator(cls: Type[BaseArch]) -> Type[BaseArch]:
        ARCH_REGISTRY[arch.value] = cls
        return cls
    return decorator


def get_arch(arch: Arch | str) -> BaseArch:
    tag = arch.value if isinstance(arch, Arch) else str(arch)
    if tag not in ARCH_REGISTRY:
        raise ConfigError(f"Unknown arch tag: {tag}")
    return ARCH_REGISTRY[tag]()


def validate_model(model: Model) -> None:
    arch = get_arch(model.spec.arch)
    spec = model.spec
    if len(model.blocks) != spec.n_layers:
        raise ShapeError(f"model has {len(model.blocks)} blocks, spec says {spec.n_layers}")
    if model.embedding.shape != arch.embedding_shape(spec):
        raise ShapeError(f"embedding shape {model.embedding.shape} != {arch.embedding_shape(spec)}")
    if model.head.shape != arch.head_shape(spec):
        raise ShapeError(f"head shape {model.head.shape} != {arch.head_shape(spec)}")
    shapes = arch.matrix_shapes(spec)
    for i, block in enumerate(model.blocks):
        if set(block.matrices) != set(shapes):
            raise ShapeError(f"block {i} matrices {sorted(block.matrices)} != {sorted(shapes)}")
        for name, shape in shapes.items():
            if block.matrices[name].shape != shape:
                raise ShapeError(f"{block_param_name(i, name)} shape {block.matrices[name].shape} != {shape}")
        for name in arch.NORM_NAMES:
            if block.norm_params.get(name) is None or block.norm_params[name].shape != (1, spec.d_model):
                raise ShapeError(f"{block_param_name(i, name)} must have shape (1, {spec.d_model})")


def _scaled_normal(rng: np.random.Generator, shape: Tuple[int, int]) -> Matrix:
    w = rng.standard_normal(shape) / np.sqrt(shape[1])
    # float32로 표현 가능한 값만 쓴다 (체크포인트 왕복이 비트 단위로 일치하도록)
    return w.astype(np.float32).astype(np.float64)


def init_model(spec: ModelSpec, seed: int, stream: int = _INIT_STREAM) -> Model:
    """seed로부터 결정적으로 초기화한다. 가중치 ~ N(0, 1/fan_in)."""
    arch = get_arch(spec.arch)
    rng = keyed_generator(seed, stream)
    embedding = _scaled_normal(rng, arch.embedding_shape(spec))
    blocks = []
    for _ in range(spec.n_layers):
        matrices = {name: _scaled_normal(rng, shape) for name, shape in arch.matrix_shapes(spec).items()}
        norms = {name: np.ones((1, spec.d_model)) for name in arch.NORM_NAMES}
        blocks.append(Block(matrices=matrices, norm_params=norms))
    head = _scaled_normal(rng, arch.head_shape(spec))
    return Model(spec=spec, embedding=embedding, blocks=blocks, head=head)


def forward(model: Model, batch: Batch) -> ForwardTrace:
    return get_arch(model.spec.arch).forward(model, batch)


def backward(
    model: Model,
    trace: ForwardTrace,
    frozen: Collection[int] = (),
    include_units: bool = True,
    loss_scale: float = 1.0,
) -> GradientSet:
    """trace로부터 파라미터별 그래디언트를 구한다.

    frozen 블록은 그래디언트를 만들지 않는다 (활성값 역전파는 통과).
    include_units=False면 embedding/head 그래디언트도 건너뛴다.
    """
    if trace.model_id != id(model) or trace.model_version != model.version:
        raise StateError("Stale forward trace: model changed since forward()")
    return get_arch(model.spec.arch).backward(model, trace, frozenset(frozen), include_units, loss_scale)
