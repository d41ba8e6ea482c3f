import csv
import io
import json

import pytest

from owskit.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from owskit.schemas import SAMPLING_METHODS

_SMALL = {
    "model": {"arch": "mlp-stack", "n_layers": 4, "d_model": 8, "d_hidden": 12},
    "total_steps": 10,
    "sample_period_k": 5,
    "refresh_every": 5,
    "batch_size": 4,
    "calibration_batches": 2,
    "eval_batches": 2,
    "rank": 2,
    "tau": 3.0,
    "lr": 1e-2,
}


@pytest.fixture
def config_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({**_SMALL, **overrides}), encoding="utf-8")
        return str(path)
    return write


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))))


def test_train_writes_run_artifacts(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", config_file(), "--out", str(out)]) == EXIT_OK
    for name in ("log.csv", "summary.json", "plan.json", "profile.json"):
        assert (out / name).exists(), name
    assert (out / "checkpoint" / "manifest.json").exists()
    assert (out / "optimizer" / "manifest.json").exists()

    assert (out / "log.csv").read_text().splitlines()[0] == "step,loss,lr,active_set"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 10
    assert summary["memory"]["method"] == "ows"


def test_train_is_byte_for_byte_reproducible(tmp_path, config_file):
    path = config_file()
    assert main(["train", "--config", path, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["train", "--config", path, "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("log.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("method", [m.value for m in SAMPLING_METHODS])
def test_train_every_sampling_method(tmp_path, config_file, method):
    out = tmp_path / method
    assert main(["train", "--config", config_file(), "--method", method, "--out", str(out)]) == EXIT_OK
    plan = json.loads((out / "plan.json").read_text())
    assert plan["method"] == method
    assert sum(plan["p"]) == pytest.approx(2.0)


def test_flags_override_config_file(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", config_file(), "--gamma", "1", "--seed", "3", "--out", str(out)]) == EXIT_OK
    config = json.loads((out / "summary.json").read_text())["config"]
    assert config["gamma"] == 1.0
    assert config["seed"] == 3


def test_default_out_dir_uses_env(tmp_path, monkeypatch, config_file):
    monkeypatch.setenv("OWS_RUNS_DIR", str(tmp_path / "runs"))
    assert main(["calibrate", "--config", config_file()]) == EXIT_OK
    profile = json.loads((tmp_path / "runs" / "calibrate" / "profile.json").read_text())
    assert len(profile["d"]) == 4


@pytest.mark.parametrize(
    "overrides",
    [{"gamma": 5.0}, {"rank": 9}, {"total_steps": 7}, {"model": {"arch": "conv-net"}}, {"tau": -1.0}],
)
def test_invalid_configs_exit_with_config_error(tmp_path, config_file, capsys, overrides):
    assert main(["train", "--config", config_file(**overrides), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_RUNTIME


def test_incompatible_task_is_a_config_error(tmp_path, config_file):
    assert main(["train", "--config", config_file(task="seq-copy"), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_divergence_exits_with_runtime_error(tmp_path, config_file, capsys):
    path = config_file(sgd=True, lr=1e200, method="full")
    with pytest.warns(RuntimeWarning):
        code = main(["train", "--config", path, "--out", str(tmp_path / "x")])
    assert code == EXIT_RUNTIME
    assert "diverged" in capsys.readouterr().err


def test_gamma_sweep(tmp_path, config_file):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", config_file(), "--axis", "gamma", "--values", "1", "2", "4", "--out", str(out)])
    assert code == EXIT_OK
    rows = _rows(out / "sweep.csv")
    assert [float(r["gamma"]) for r in rows] == [1.0, 2.0, 4.0]
    totals = [int(r["memory_total_elems"]) for r in rows]
    assert totals == sorted(totals)


def test_tau_sweep_tolerates_degenerate_profiles(tmp_path, config_file):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", config_file(), "--axis", "tau", "--values", "3", "1e6", "--out", str(out)])
    assert code == EXIT_OK
    assert len(_rows(out / "sweep.csv")) == 2


def test_sweep_rejects_fractional_rank(tmp_path, config_file):
    code = main(["sweep", "--config", config_file(), "--axis", "rank", "--values", "1.5", "--out", str(tmp_path / "s")])
    assert code == EXIT_CONFIG


def test_memory_table_and_sweep(tmp_path, config_file, capsys):
    assert main(["memory", "--config", config_file()]) == EXIT_OK
    table = capsys.readouterr().out
    for method in ("full", "lora", "galore", "lisa", "ows"):
        assert method in table

    out = tmp_path / "mem"
    assert main(["memory", "--config", config_file(), "--gammas", "1", "2", "--ranks", "2", "--out", str(out)]) == EXIT_OK
    assert len(_rows(out / "memory.csv")) == 5 * 2


def test_compare_methods(tmp_path, config_file, capsys):
    out = tmp_path / "cmp"
    code = main(
        ["compare", "--config", config_file(), "--methods", "ows", "lisa-uniform", "--seeds", "0", "1", "--out", str(out)]
    )
    assert code == EXIT_OK
    rows = _rows(out / "compare.csv")
    assert [(r["method"], r["seed"]) for r in rows] == [
        ("ows", "0"), ("lisa-uniform", "0"), ("ows", "1"), ("lisa-uniform", "1")
    ]
    assert {r["update_mode"] for r in rows} == {"low-rank"}
    printed = capsys.readouterr().out
    assert "mean final eval loss" in printed
    assert "ows < lisa-uniform:" in printed and "/2 seeds" in printed


def test_compare_update_mode_flag_applies_to_every_method(tmp_path, config_file):
    out = tmp_path / "cmp"
    args = ["compare", "--config", config_file(), "--methods", "ows", "lisa-d", "--seeds", "0"]
    assert main(args + ["--update-mode", "full-rank", "--out", str(out)]) == EXIT_OK
    assert {r["update_mode"] for r in _rows(out / "compare.csv")} == {"full-rank"}
