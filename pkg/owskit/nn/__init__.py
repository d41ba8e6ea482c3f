"""데스크 규모 학습 모델 (수동 역전파)"""

from owskit.nn.base import (
    ARCH_REGISTRY,
    Batch,
    Block,
    ForwardTrace,
    GradientSet,
    Model,
    backward,
    block_param_name,
    forward,
    get_arch,
    init_model,
    parse_param_name,
)
from owskit.nn.checkpoint import load_checkpoint, read_bundle, save_checkpoint, write_bundle

# 구조 구현을 import하면 자동으로 registry에 등록됨
from owskit.nn.mlp import MlpStack
from owskit.nn.transformer import TinyTransformer

__all__ = [
    "ARCH_REGISTRY",
    "Batch",
    "Block",
    "ForwardTrace",
    "GradientSet",
    "Model",
    "MlpStack",
    "TinyTransformer",
    "backward",
    "block_param_name",
    "forward",
    "get_arch",
    "init_model",
    "load_checkpoint",
    "parse_param_name",
    "read_bundle",
    "save_checkpoint",
    "write_bundle",
]
