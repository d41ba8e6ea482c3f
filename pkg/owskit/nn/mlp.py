"""MLP 스택 (잔차 + pre-RMSNorm) 회귀 모델"""

from __future__ import annotations

from typing import Collection, Dict, Tuple

import numpy as np

from owskit.errors import ShapeError
from owskit.nn.base import BaseArch, Batch, ForwardTrace, GradientSet, Model, block_param_name, register_arch
from owskit.nn.functional import gelu, gelu_grad, rms_norm, rms_norm_backward
from owskit.schemas import Arch, ModelSpec


@register_arch(Arch.MLP_STACK)
class MlpStack(BaseArch):
    """h ← h + W2·gelu(W1·norm(h)), 손실은 평균제곱오차."""

    INPUT_KEYS = {"w1": "n", "w2": "a"}
    NORM_NAMES = ("norm",)

    def matrix_shapes(self, spec: ModelSpec) -> Dict[str, Tuple[int, int]]:
        return {"w1": (spec.d_hidden, spec.d_model), "w2": (spec.d_model, spec.d_hidden)}

    def embedding_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        return (spec.d_model, spec.d_model)

    def head_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        return (spec.d_model, spec.d_model)

    def rows_per_batch(self, spec: ModelSpec, batch_size: int) -> int:
        return batch_size

    def cache_elements(self, spec: ModelSpec, batch_size: int) -> int:
        b, d, dh = batch_size, spec.d_model, spec.d_hidden
        # 블록: h, r, n, u, a / 상단: x, h_final, diff
        return spec.n_layers * b * (2 * d + 1 + 2 * dh) + 3 * b * d

    def forward(self, model: Model, batch: Batch) -> ForwardTrace:
        spec = model.spec
        x = np.asarray(batch.inputs, dtype=np.float64)
        y = np.asarray(batch.targets, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != spec.d_model or y.shape != x.shape:
            raise ShapeError(
                f"mlp-stack batch must be (B, {spec.d_model}) inputs and targets, got {x.shape} / {y.shape}"
            )

        h = x @ model.embedding.T
        caches = []
        for block in model.blocks:
            n, r = rms_norm(h, block.norm_params["norm"])
            u = n @ block.matrices["w1"].T
            a = gelu(u)
            caches.append({"h": h, "r": r, "n": n, "u": u, "a": a})
            h = h + a @ block.matrices["w2"].T

        diff = h @ model.head.T - y
        loss = float(np.mean(diff * diff))
        return ForwardTrace(
            loss=loss,
            block_caches=caches,
            top_cache={"x": x, "h_final": h, "diff": diff},
            input_keys=dict(self.INPUT_KEYS),
            model_id=id(model),
            model_version=model.version,
        )

    def backward(
        self,
        model: Model,
        trace: ForwardTrace,
        frozen: Collection[int],
        include_units: bool,
        loss_scale: float,
    ) -> GradientSet:
        top = trace.top_cache
        diff = top["diff"]
        grads: Dict[str, np.ndarray] = {}

        dout = loss_scale * 2.0 * diff / diff.size
        if include_units:
            grads["head"] = dout.T @ top["h_final"]
        dh = dout @ model.head

        for i in reversed(range(len(model.blocks))):
            block, cache = model.blocks[i], trace.block_caches[i]
            w1, w2, gain = block.matrices["w1"], block.matrices["w2"], block.norm_params["norm"]
            trainable = i not in frozen

            if trainable:
                grads[block_param_name(i, "w2")] = dh.T @ cache["a"]
            du = (dh @ w2) * gelu_grad(cache["u"])
            if trainable:
                grads[block_param_name(i, "w1")] = du.T @ cache["n"]
            dx, dgain = rms_norm_backward(du @ w1, cache["h"], cache["r"], gain)
            if trainable:
                grads[block_param_name(i, "norm")] = dgain
            dh = dh + dx

        if include_units:
            grads["embedding"] = dh.T @ top["x"]
        return GradientSet(grads)
