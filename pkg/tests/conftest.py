"""공통 fixture"""

from __future__ import annotations

from typing import Any

import numpy as np
import pytest

from owskit.schemas import Arch, ModelSpec, TrainConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def mlp_spec() -> ModelSpec:
    return ModelSpec(arch=Arch.MLP_STACK, n_layers=4, d_model=16, d_hidden=32)


@pytest.fixture
def small_mlp_spec() -> ModelSpec:
    return ModelSpec(arch=Arch.MLP_STACK, n_layers=2, d_model=8, d_hidden=12)


@pytest.fixture
def transformer_spec() -> ModelSpec:
    return ModelSpec(
        arch=Arch.TINY_TRANSFORMER, n_layers=2, d_model=8, d_hidden=12, n_heads=2, vocab=11, seq_len=5
    )


def make_config(**overrides: Any) -> TrainConfig:
    """테스트용 작은 학습 설정."""
    data: dict[str, Any] = {
        "total_steps": 20,
        "sample_period_k": 5,
        "refresh_every": 5,
        "batch_size": 8,
        "calibration_batches": 2,
        "eval_batches": 2,
        "rank": 4,
        "lr": 1e-2,
    }
    data.update(overrides)
    return TrainConfig.model_validate(data)


@pytest.fixture
def config_factory():
    return make_config


@pytest.fixture
async def fake_redis():
    from fakeredis import FakeServer, aioredis

    client = aioredis.FakeRedis(server=FakeServer(), decode_responses=True)
    yield client
    await client.aclose()
