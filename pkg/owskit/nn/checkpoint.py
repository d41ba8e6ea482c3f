"""체크포인트 포맷: JSON manifest + little-endian float32 blob

manifest.json
    {"arch": ..., "spec": {...}, "tensors": [{"name", "rows", "cols", "offset"}, ...]}
tensors.bin
    manifest 순서대로 이어붙인 row-major float32. offset은 바이트 단위.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from owskit.errors import FormatError
from owskit.linalg import Matrix
from owskit.nn.base import Block, Model, get_arch, parse_param_name
from owskit.schemas import load_spec

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"
CHECKPOINT_FORMAT = "owskit-checkpoint"
FORMAT_VERSION = 1

_DTYPE = np.dtype("<f4")
_ENTRY_KEYS = ("name", "rows", "cols", "offset")


def write_bundle(path: str | Path, header: Mapping[str, Any], tensors: Mapping[str, Matrix]) -> Path:
    """header와 텐서들을 manifest + blob 디렉토리로 저장한다."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = np.ascontiguousarray(np.asarray(value), dtype=_DTYPE)
        if arr.ndim != 2:
            raise FormatError(f"tensor must be 2-D, got shape {arr.shape}", name)
        entries.append({"name": name, "rows": int(arr.shape[0]), "cols": int(arr.shape[1]), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes

    manifest = {**header, "tensors": entries}
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")
    (root / BLOB_NAME).write_bytes(b"".join(chunks))
    return root


def read_bundle(path: str | Path) -> Tuple[Dict[str, Any], Dict[str, Matrix]]:
    """write_bundle의 역. 손상된 manifest나 잘린 blob은 FormatError."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    blob_path = root / BLOB_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"Checkpoint manifest not found: {manifest_path}")

    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt manifest: {exc}", "manifest") from exc
    if not isinstance(manifest, dict):
        raise FormatError("manifest must be a JSON object", "manifest")

    entries = manifest.pop("tensors", None)
    if not isinstance(entries, list):
        raise FormatError("missing tensor list", "tensors")
    if not blob_path.exists():
        raise FormatError(f"blob not found: {blob_path}", "blob")
    blob = blob_path.read_bytes()

    tensors: Dict[str, Matrix] = {}
    expected_offset = 0
    for i, entry in enumerate(entries):
        for key in _ENTRY_KEYS:
            if not isinstance(entry, dict) or key not in entry:
                raise FormatError("missing tensor entry key", f"tensors[{i}].{key}")
        for key in ("rows", "cols", "offset"):
            if not isinstance(entry[key], int) or entry[key] < 0:
                raise FormatError("tensor entry value must be a non-negative integer", f"tensors[{i}].{key}")
        if entry["offset"] != expected_offset:
            raise FormatError(
                f"offset {entry['offset']} does not follow previous tensor (expected {expected_offset})",
                f"tensors[{i}].offset",
            )
        count = entry["rows"] * entry["cols"]
        end = expected_offset + count * _DTYPE.itemsize
        if end > len(blob):
            raise FormatError(
                f"blob truncated: tensor '{entry['name']}' needs bytes up to {end}, blob has {len(blob)}",
                f"tensors[{i}]",
            )
        data = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=expected_offset)
        tensors[entry["name"]] = data.reshape(entry["rows"], entry["cols"]).astype(np.float64)
        expected_offset = end

    if expected_offset != len(blob):
        raise FormatError(
            f"manifest shapes cover {expected_offset} bytes but blob has {len(blob)}", "tensors"
        )
    return manifest, tensors


def save_checkpoint(model: Model, path: str | Path) -> Path:
    header = {
        "format": CHECKPOINT_FORMAT,
        "format_version": FORMAT_VERSION,
        "arch": model.spec.arch.value,
        "spec": model.spec.model_dump(mode="json"),
    }
    root = write_bundle(path, header, model.named_parameters())
    logger.info("체크포인트 저장: %s (%d params)", root, model.parameter_count())
    return root


def load_checkpoint(path: str | Path) -> Model:
    header, tensors = read_bundle(path)
    if "arch" not in header:
        raise FormatError("missing arch tag", "arch")
    if not isinstance(header.get("spec"), dict):
        raise FormatError("missing model spec", "spec")
    spec = load_spec({**header["spec"], "arch": header["arch"]})
    arch = get_arch(spec.arch)

    expected: Dict[str, Tuple[int, int]] = {
        "embedding": arch.embedding_shape(spec),
        "head": arch.head_shape(spec),
    }
    for i in range(spec.n_layers):
        for name, shape in arch.matrix_shapes(spec).items():
            expected[f"blocks.{i}.{name}"] = shape
        for name in arch.NORM_NAMES:
            expected[f"blocks.{i}.{name}"] = (1, spec.d_model)

    for name, shape in expected.items():
        if name not in tensors:
            raise FormatError("tensor missing from checkpoint", name)
        if tensors[name].shape != shape:
            raise FormatError(f"shape {tensors[name].shape} does not match spec {shape}", f"{name}.shape")
    extra = sorted(set(tensors) - set(expected))
    if extra:
        raise FormatError(f"unexpected tensors: {extra}", extra[0])

    blocks = [Block(matrices={}, norm_params={}) for _ in range(spec.n_layers)]
    for name, value in tensors.items():
        index, local = parse_param_name(name)
        if index is None:
            continue
        target = blocks[index].norm_params if local in arch.NORM_NAMES else blocks[index].matrices
        target[local] = value
    return Model(spec=spec, embedding=tensors["embedding"], blocks=blocks, head=tensors["head"])
