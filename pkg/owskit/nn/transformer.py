"""작은 pre-norm 트랜스포머 (토큰 단위 cross-entropy)"""

from __future__ import annotations

import math
from typing import Collection, Dict, Tuple

import numpy as np

from owskit.errors import ShapeError
from owskit.nn.base import BaseArch, Batch, ForwardTrace, GradientSet, Model, block_param_name, register_arch
from owskit.nn.functional import (
    gelu,
    gelu_grad,
    log_softmax,
    rms_norm,
    rms_norm_backward,
    sinusoidal_positions,
    softmax,
)
from owskit.schemas import Arch, ModelSpec


def _split_heads(x: np.ndarray, b: int, length: int, heads: int) -> np.ndarray:
    # (B·L, d) -> (B, H, L, d/H)
    return x.reshape(b, length, heads, -1).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    # (B, H, L, d/H) -> (B·L, d)
    b, heads, length, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b * length, heads * dk)


@register_arch(Arch.TINY_TRANSFORMER)
class TinyTransformer(BaseArch):
    """h ← h + Wo·attn(norm1(h)), h ← h + down·gelu(up·norm2(h))."""

    INPUT_KEYS = {"wq": "n1", "wk": "n1", "wv": "n1", "wo": "o", "up": "n2", "down": "a"}
    NORM_NAMES = ("norm1", "norm2")

    def matrix_shapes(self, spec: ModelSpec) -> Dict[str, Tuple[int, int]]:
        d, dh = spec.d_model, spec.d_hidden
        return {
            "wq": (d, d),
            "wk": (d, d),
            "wv": (d, d),
            "wo": (d, d),
            "up": (dh, d),
            "down": (d, dh),
        }

    def embedding_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        return (spec.vocab, spec.d_model)

    def head_shape(self, spec: ModelSpec) -> Tuple[int, int]:
        return (spec.vocab, spec.d_model)

    def rows_per_batch(self, spec: ModelSpec, batch_size: int) -> int:
        return batch_size * spec.seq_len

    def cache_elements(self, spec: ModelSpec, batch_size: int) -> int:
        rows = batch_size * spec.seq_len
        d, dh = spec.d_model, spec.d_hidden
        # 블록: h, r1, n1, q, k, v, p, o, h1, r2, n2, u, a
        per_block = rows * (8 * d + 2 + 2 * dh) + batch_size * spec.n_heads * spec.seq_len**2
        # 상단: tokens, targets, h_final, rf, nf, probs
        top = rows * (3 + 2 * d + spec.vocab)
        return spec.n_layers * per_block + top

    def forward(self, model: Model, batch: Batch) -> ForwardTrace:
        spec = model.spec
        tokens = np.asarray(batch.inputs)
        targets = np.asarray(batch.targets)
        if tokens.ndim != 2 or tokens.shape[1] != spec.seq_len or targets.shape != tokens.shape:
            raise ShapeError(
                f"tiny-transformer batch must be (B, {spec.seq_len}) tokens and targets, "
                f"got {tokens.shape} / {targets.shape}"
            )
        if tokens.min() < 0 or tokens.max() >= spec.vocab or targets.min() < 0 or targets.max() >= spec.vocab:
            raise ShapeError(f"token ids must lie in [0, {spec.vocab})")

        b, length, heads = tokens.shape[0], spec.seq_len, spec.n_heads
        scale = 1.0 / math.sqrt(spec.d_model // heads)
        positions = sinusoidal_positions(length, spec.d_model)
        h = (model.embedding[tokens] + positions[None, :, :]).reshape(b * length, spec.d_model)

        mask = None
        if spec.causal:
            mask = np.triu(np.ones((length, length), dtype=bool), k=1)

        caches = []
        for block in model.blocks:
            mats = block.matrices
            n1, r1 = rms_norm(h, block.norm_params["norm1"])
            q, k, v = n1 @ mats["wq"].T, n1 @ mats["wk"].T, n1 @ mats["wv"].T
            scores = _split_heads(q, b, length, heads) @ _split_heads(k, b, length, heads).transpose(0, 1, 3, 2)
            scores = scores * scale
            if mask is not None:
                scores = np.where(mask, -np.inf, scores)
            p = softmax(scores, axis=-1)
            o = _merge_heads(p @ _split_heads(v, b, length, heads))
            h1 = h + o @ mats["wo"].T

            n2, r2 = rms_norm(h1, block.norm_params["norm2"])
            u = n2 @ mats["up"].T
            a = gelu(u)
            caches.append(
                {"h": h, "r1": r1, "n1": n1, "q": q, "k": k, "v": v, "p": p, "o": o,
                 "h1": h1, "r2": r2, "n2": n2, "u": u, "a": a}
            )
            h = h1 + a @ mats["down"].T

        nf, rf = rms_norm(h)
        logits = nf @ model.head.T
        flat_targets = targets.reshape(-1)
        logp = log_softmax(logits, axis=-1)
        loss = float(-np.mean(logp[np.arange(flat_targets.size), flat_targets]))
        return ForwardTrace(
            loss=loss,
            block_caches=caches,
            top_cache={
                "tokens": tokens.reshape(-1),
                "targets": flat_targets,
                "h_final": h,
                "rf": rf,
                "nf": nf,
                "probs": np.exp(logp),
            },
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
        spec = model.spec
        top = trace.top_cache
        rows = top["targets"].size
        b, length, heads = rows // spec.seq_len, spec.seq_len, spec.n_heads
        scale = 1.0 / math.sqrt(spec.d_model // heads)
        grads: Dict[str, np.ndarray] = {}

        dlogits = top["probs"].copy()
        dlogits[np.arange(rows), top["targets"]] -= 1.0
        dlogits *= loss_scale / rows
        if include_units:
            grads["head"] = dlogits.T @ top["nf"]
        dh, _ = rms_norm_backward(dlogits @ model.head, top["h_final"], top["rf"])

        for i in reversed(range(len(model.blocks))):
            block, c = model.blocks[i], trace.block_caches[i]
            mats = block.matrices
            trainable = i not in frozen

            # FFN
            if trainable:
                grads[block_param_name(i, "down")] = dh.T @ c["a"]
            du = (dh @ mats["down"]) * gelu_grad(c["u"])
            if trainable:
                grads[block_param_name(i, "up")] = du.T @ c["n2"]
            dx, dg2 = rms_norm_backward(du @ mats["up"], c["h1"], c["r2"], block.norm_params["norm2"])
            dh1 = dh + dx
            if trainable:
                grads[block_param_name(i, "norm2")] = dg2

            # attention
            if trainable:
                grads[block_param_name(i, "wo")] = dh1.T @ c["o"]
            do_heads = _split_heads(dh1 @ mats["wo"], b, length, heads)
            p = c["p"]
            qh = _split_heads(c["q"], b, length, heads)
            kh = _split_heads(c["k"], b, length, heads)
            vh = _split_heads(c["v"], b, length, heads)
            dp = do_heads @ vh.transpose(0, 1, 3, 2)
            dvh = p.transpose(0, 1, 3, 2) @ do_heads
            ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True)) * scale
            dq = _merge_heads(ds @ kh)
            dk = _merge_heads(ds.transpose(0, 1, 3, 2) @ qh)
            dv = _merge_heads(dvh)
            if trainable:
                grads[block_param_name(i, "wq")] = dq.T @ c["n1"]
                grads[block_param_name(i, "wk")] = dk.T @ c["n1"]
                grads[block_param_name(i, "wv")] = dv.T @ c["n1"]
            dn1 = dq @ mats["wq"] + dk @ mats["wk"] + dv @ mats["wv"]
            dx, dg1 = rms_norm_backward(dn1, c["h"], c["r1"], block.norm_params["norm1"])
            if trainable:
                grads[block_param_name(i, "norm1")] = dg1
            dh = dh1 + dx

        if include_units:
            d_embedding = np.zeros_like(model.embedding)
            np.add.at(d_embedding, top["tokens"], dh)
            grads["embedding"] = d_embedding
        return GradientSet(grads)
