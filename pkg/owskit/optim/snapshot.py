"""옵티마이저 상태 스냅샷 (체크포인트와 같은 manifest + blob 포맷)

텐서 이름은 '<파라미터>/m', '<파라미터>/v', '<파라미터>/projector'.
blob이 float32라 float64 모멘트는 저장 시 반올림된다.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Union

from owskit.errors import FormatError
from owskit.linalg import Matrix
from owskit.nn.checkpoint import read_bundle, write_bundle
from owskit.optim.adam import AdamState
from owskit.optim.lowrank import LowRankOptState
from owskit.schemas import SvdMethod

OptState = Union[AdamState, LowRankOptState]

SNAPSHOT_FORMAT = "owskit-optimizer"


def _adam_meta(state: AdamState) -> Dict[str, Any]:
    return {
        "shape": list(state.shape),
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "sgd": state.sgd,
        "step": state.step,
    }


def save_optimizer_state(states: Mapping[str, OptState], path: str | Path) -> Path:
    meta: Dict[str, Any] = {}
    tensors: Dict[str, Matrix] = {}
    for name, state in states.items():
        adam = state.adam if isinstance(state, LowRankOptState) else state
        entry: Dict[str, Any] = {"kind": "adam", "adam": _adam_meta(adam)}
        if isinstance(state, LowRankOptState):
            entry.update(
                kind="low-rank",
                shape=list(state.shape),
                rank=state.rank,
                refresh_every=state.refresh_every,
                scale=state.scale,
                svd_method=state.svd_method.value,
                seed=state.seed,
                active_steps=state.active_steps,
            )
            if state.projector is not None:
                tensors[f"{name}/projector"] = state.projector
        if not adam.sgd:
            tensors[f"{name}/m"] = adam.m
            tensors[f"{name}/v"] = adam.v
        meta[name] = entry
    return write_bundle(path, {"format": SNAPSHOT_FORMAT, "states": meta}, tensors)


def _restore_adam(name: str, meta: Mapping[str, Any], tensors: Mapping[str, Matrix]) -> AdamState:
    try:
        state = AdamState(
            shape=tuple(meta["shape"]),
            lr=meta["lr"],
            beta1=meta["beta1"],
            beta2=meta["beta2"],
            eps=meta["eps"],
            sgd=meta["sgd"],
            step=meta["step"],
            m=None if meta["sgd"] else tensors[f"{name}/m"],
            v=None if meta["sgd"] else tensors[f"{name}/v"],
        )
    except KeyError as exc:
        raise FormatError(f"incomplete optimizer state: {exc}", f"states.{name}") from exc
    return state


def load_optimizer_state(path: str | Path) -> Dict[str, OptState]:
    header, tensors = read_bundle(path)
    if header.get("format") != SNAPSHOT_FORMAT:
        raise FormatError(f"not an optimizer snapshot: {header.get('format')!r}", "format")
    states: Dict[str, OptState] = {}
    for name, entry in header.get("states", {}).items():
        adam = _restore_adam(name, entry.get("adam", {}), tensors)
        if entry.get("kind") == "low-rank":
            states[name] = LowRankOptState(
                shape=tuple(entry["shape"]),
                rank=entry["rank"],
                adam=adam,
                refresh_every=entry["refresh_every"],
                scale=entry["scale"],
                svd_method=SvdMethod(entry["svd_method"]),
                seed=entry["seed"],
                active_steps=entry["active_steps"],
                projector=tensors.get(f"{name}/projector"),
            )
        else:
            states[name] = adam
    return states
