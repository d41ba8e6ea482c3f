import pytest

from owskit.experiment import compare_means, compare_update_mode, run_compare, seed_wins
from owskit.schemas import SAMPLING_METHODS, Method, TrainConfig, UpdateMode


@pytest.mark.parametrize("method", SAMPLING_METHODS)
def test_sampling_methods_share_low_rank_by_default(config_factory, method):
    assert compare_update_mode(config_factory(), method) == UpdateMode.LOW_RANK


def test_explicit_update_mode_wins_and_baselines_keep_theirs(config_factory):
    pinned = config_factory(update_mode="full-rank")
    assert compare_update_mode(pinned, Method.OWS) == UpdateMode.FULL_RANK
    assert compare_update_mode(pinned, Method.GALORE) == UpdateMode.FULL_RANK

    base = config_factory()
    assert compare_update_mode(base, Method.FULL) == UpdateMode.FULL_RANK
    assert compare_update_mode(base, Method.GALORE) == UpdateMode.LOW_RANK


def test_compare_rows_record_the_shared_mode(config_factory):
    rows = run_compare(config_factory(tau=3.0), ["ows", "lisa-uniform", "lisa-d"], [0])
    assert [row["method"] for row in rows] == ["ows", "lisa-uniform", "lisa-d"]
    assert {row["update_mode"] for row in rows} == {"low-rank"}


def test_seed_wins_counts_only_shared_seeds():
    rows = [
        {"method": "ows", "seed": 0, "final_eval_loss": 1.0},
        {"method": "ows-reverse", "seed": 0, "final_eval_loss": 2.0},
        {"method": "ows", "seed": 1, "final_eval_loss": 3.0},
        {"method": "ows-reverse", "seed": 1, "final_eval_loss": 2.0},
        {"method": "ows", "seed": 2, "final_eval_loss": 0.5},
    ]
    assert seed_wins(rows, "ows", "ows-reverse") == (1, 2)
    assert seed_wins(rows, Method.OWS_REVERSE, Method.OWS) == (1, 2)


@pytest.mark.slow
def test_layer_signal_ordering_over_five_seeds():
    base = TrainConfig(task="layer-signal", total_steps=500, gamma=2.0, rank=8)
    rows = run_compare(base, ["ows", "lisa-uniform", "ows-reverse"], [0, 1, 2, 3, 4])

    means = compare_means(rows)
    assert means["ows"] < means["lisa-uniform"] < means["ows-reverse"]
    wins, total = seed_wins(rows, "ows", "ows-reverse")
    assert total == 5
    assert wins >= 4
