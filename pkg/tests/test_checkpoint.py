import json

import numpy as np
import pytest

from owskit.errors import ConfigError, FormatError
from owskit.nn import init_model, load_checkpoint, read_bundle, save_checkpoint, write_bundle
from owskit.nn.checkpoint import BLOB_NAME, MANIFEST_NAME


@pytest.mark.parametrize("spec_name", ["mlp_spec", "transformer_spec"])
def test_checkpoint_round_trip_is_bit_exact(request, tmp_path, spec_name):
    spec = request.getfixturevalue(spec_name)
    model = init_model(spec, seed=2)
    loaded = load_checkpoint(save_checkpoint(model, tmp_path / "ckpt"))

    assert loaded.spec == spec
    original = model.named_parameters()
    for name, value in loaded.named_parameters().items():
        assert np.array_equal(value, original[name]), name


def test_bundle_preserves_header_and_order(tmp_path):
    tensors = {"b": np.ones((2, 3)), "a": np.arange(4.0).reshape(4, 1)}
    write_bundle(tmp_path, {"format": "x", "extra": 1}, tensors)
    header, loaded = read_bundle(tmp_path)
    assert header == {"format": "x", "extra": 1}
    assert list(loaded) == ["b", "a"]
    assert np.array_equal(loaded["a"], tensors["a"])


def test_bundle_is_manifest_plus_float32_blob(tmp_path):
    write_bundle(tmp_path, {"format": "x"}, {"b": np.ones((2, 3)), "a": np.arange(4.0).reshape(4, 1)})
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted([MANIFEST_NAME, BLOB_NAME])

    entries = json.loads((tmp_path / MANIFEST_NAME).read_text(encoding="utf-8"))["tensors"]
    assert [(e["name"], e["offset"]) for e in entries] == [("b", 0), ("a", 24)]
    blob = np.frombuffer((tmp_path / BLOB_NAME).read_bytes(), dtype="<f4")
    assert blob.tolist() == [1.0] * 6 + [0.0, 1.0, 2.0, 3.0]


def test_truncated_blob_raises_format_error(tmp_path, mlp_spec):
    root = save_checkpoint(init_model(mlp_spec, seed=0), tmp_path / "ckpt")
    blob = (root / BLOB_NAME).read_bytes()
    (root / BLOB_NAME).write_bytes(blob[:-4])
    with pytest.raises(FormatError) as exc_info:
        load_checkpoint(root)
    assert exc_info.value.field


def test_shape_mismatch_names_the_field(tmp_path, mlp_spec):
    root = save_checkpoint(init_model(mlp_spec, seed=0), tmp_path / "ckpt")
    manifest = json.loads((root / MANIFEST_NAME).read_text())
    manifest["spec"]["d_hidden"] = mlp_spec.d_hidden + 1
    (root / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(FormatError) as exc_info:
        load_checkpoint(root)
    assert exc_info.value.field.endswith(".shape")


def test_unknown_arch_tag_raises_config_error(tmp_path, mlp_spec):
    root = save_checkpoint(init_model(mlp_spec, seed=0), tmp_path / "ckpt")
    manifest = json.loads((root / MANIFEST_NAME).read_text())
    manifest["arch"] = "conv-net"
    (root / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(ConfigError):
        load_checkpoint(root)


def test_corrupt_manifest(tmp_path, mlp_spec):
    root = save_checkpoint(init_model(mlp_spec, seed=0), tmp_path / "ckpt")
    (root / MANIFEST_NAME).write_text("{not json")
    with pytest.raises(FormatError):
        load_checkpoint(root)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nowhere")
