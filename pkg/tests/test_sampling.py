import numpy as np
import pytest

from owskit.errors import ConfigError, DegenerateImportanceError
from owskit.nn import Batch, init_model
from owskit.sampling import (
    PlanInputs,
    bi_scores,
    block_influence,
    build_plan,
    draw_active_set,
    lisa_d_probabilities,
    lisa_probabilities,
    load_plan,
    normalize_to_budget,
    ows_probabilities,
    relative_magnitude,
    reverse_ows_probabilities,
    rm_scores,
    save_plan,
)
from owskit.schemas import SAMPLING_METHODS, Method, OutlierProfile, SamplingMode, SamplingPlan


def _profile(d):
    return OutlierProfile(tau=13.0, d=d, counts=[(int(x * 100), 100) for x in d])


def test_ows_clips_and_redistributes():
    plan = ows_probabilities(_profile([0.1, 0.3, 0.0, 0.6]), gamma=2.0)
    assert plan.p == pytest.approx([0.25, 0.75, 0.0, 1.0])
    assert sum(plan.p) == pytest.approx(2.0)


def test_ows_without_clipping_is_proportional():
    plan = ows_probabilities(_profile([0.1, 0.2, 0.3, 0.4]), gamma=1.0)
    assert plan.p == pytest.approx([0.1, 0.2, 0.3, 0.4])


def test_ows_is_monotone_in_outlier_ratio(rng):
    for _ in range(100):
        d = list(rng.uniform(0.0, 0.05, size=6))
        gamma = float(rng.uniform(0.5, 6.0))
        p = ows_probabilities(_profile(d), gamma).p
        for i in range(6):
            for j in range(6):
                if d[i] >= d[j]:
                    assert p[i] >= p[j] - 1e-12
        assert sum(p) == pytest.approx(gamma)
        assert all(0.0 <= x <= 1.0 for x in p)


def test_gamma_equal_to_layer_count_activates_everything():
    plan = ows_probabilities(_profile([0.0, 0.1, 0.0, 0.2]), gamma=4.0)
    assert plan.p == [1.0, 1.0, 1.0, 1.0]


def test_equal_ratios_give_uniform_probabilities():
    plan = ows_probabilities(_profile([0.02] * 5), gamma=2.0)
    assert plan.p == [0.4] * 5


def test_all_zero_profile_is_degenerate():
    with pytest.raises(DegenerateImportanceError):
        ows_probabilities(_profile([0.0, 0.0, 0.0]), gamma=1.0)


def test_build_plan_uniform_fallback(caplog):
    inputs = PlanInputs(n_layers=4, profile=_profile([0.0] * 4))
    with pytest.raises(ConfigError):
        build_plan(Method.OWS, 2.0, inputs, uniform_fallback=False)

    plan = build_plan(Method.OWS, 2.0, inputs, uniform_fallback=True)
    assert plan.method == Method.OWS
    assert plan.p == [0.5] * 4
    assert "균등" in caplog.text


def test_lisa_and_lisa_d():
    assert lisa_probabilities(4, 2.0).p == [0.5] * 4
    assert lisa_d_probabilities(4, 2.0).p == pytest.approx([0.8, 0.6, 0.4, 0.2])


def test_reverse_prefers_low_outlier_layers():
    plan = reverse_ows_probabilities(_profile([0.1, 0.3, 0.0, 0.6]), gamma=1.0)
    assert plan.p == pytest.approx([0.5 / 1.4, 0.3 / 1.4, 0.6 / 1.4, 0.0])
    assert reverse_ows_probabilities(_profile([0.0] * 3), gamma=1.5).p == [0.5] * 3


def test_full_and_galore_plans_cover_every_layer():
    for method in (Method.FULL, Method.GALORE):
        plan = build_plan(method, 1.0, PlanInputs(n_layers=3))
        assert plan.p == [1.0, 1.0, 1.0]
        assert plan.gamma == 3.0


def test_missing_inputs_and_bad_budget():
    with pytest.raises(ConfigError):
        build_plan(Method.OWS, 1.0, PlanInputs(n_layers=3))
    with pytest.raises(ConfigError):
        build_plan(Method.BI, 1.0, PlanInputs(n_layers=3, scores=[1.0, 2.0]))
    with pytest.raises(ConfigError):
        build_plan("nope", 1.0, PlanInputs(n_layers=3))
    with pytest.raises(ConfigError):
        lisa_probabilities(3, 3.5)
    with pytest.raises(ConfigError):
        lisa_probabilities(3, 0.0)
    with pytest.raises(ConfigError):
        normalize_to_budget([1.0, -0.5], 1.0)


def test_normalize_spreads_remaining_mass_over_zero_weights():
    p = normalize_to_budget([1.0, 0.0, 0.0], 2.0)
    assert p == pytest.approx([1.0, 0.5, 0.5])


def test_plan_round_trip(tmp_path):
    plan = ows_probabilities(_profile([0.1, 0.3, 0.0, 0.6]), gamma=2.0)
    assert load_plan(save_plan(plan, tmp_path / "plan.json")) == plan


def test_plan_rejects_budget_mismatch():
    with pytest.raises(ValueError):
        SamplingPlan(method=Method.OWS, gamma=1.0, p=[0.2, 0.2])


def test_draw_is_deterministic_per_seed_and_period():
    plan = lisa_probabilities(8, 3.0)
    first = [draw_active_set(plan, seed=7, period_index=t).active_blocks for t in range(20)]
    second = [draw_active_set(plan, seed=7, period_index=t).active_blocks for t in reversed(range(20))]
    assert first == list(reversed(second))
    other = [draw_active_set(plan, seed=8, period_index=t).active_blocks for t in range(20)]
    assert first != other


def test_draw_respects_certain_and_impossible_layers():
    plan = SamplingPlan(method=Method.OWS, gamma=2.0, p=[1.0, 0.0, 1.0, 0.0])
    for mode in SamplingMode:
        for t in range(50):
            active = draw_active_set(plan, seed=0, period_index=t, mode=mode)
            assert active.active_blocks == (0, 2)
            assert active.frozen_blocks() == (1, 3)
            assert active.label() == "0;2"


@pytest.mark.parametrize("mode", list(SamplingMode))
def test_empirical_frequencies_match_probabilities(mode):
    plan = ows_probabilities(_profile([0.1, 0.3, 0.0, 0.6, 0.2]), gamma=2.0)
    periods = 100_000
    counts = np.zeros(plan.n_layers)
    sizes = set()
    for t in range(periods):
        active = draw_active_set(plan, seed=11, period_index=t, mode=mode)
        counts[list(active.active_blocks)] += 1
        sizes.add(len(active))
    assert np.allclose(counts / periods, plan.p, atol=0.01)
    if mode == SamplingMode.SYSTEMATIC:
        assert sizes == {2}


def test_block_influence_and_relative_magnitude_hand_examples():
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert block_influence(x, x) == pytest.approx(0.0)
    assert block_influence(x, -x) == pytest.approx(2.0)
    assert relative_magnitude(x, x) == pytest.approx(0.0)
    # x_out = 2·x_in -> 가지 노름 / 출력 노름 = 1/2
    assert relative_magnitude(x, 2.0 * x) == pytest.approx(0.5)
    zeros = np.zeros((1, 2))
    assert block_influence(zeros, zeros) == 0.0
    assert relative_magnitude(zeros, zeros) == 0.0


def test_model_importance_scores(mlp_spec, rng):
    model = init_model(mlp_spec, seed=0)
    batches = [
        Batch(rng.standard_normal((4, mlp_spec.d_model)), rng.standard_normal((4, mlp_spec.d_model)))
        for _ in range(2)
    ]
    bi = bi_scores(model, batches)
    rm = rm_scores(model, batches)
    assert len(bi) == len(rm) == mlp_spec.n_layers
    assert all(0.0 <= s <= 2.0 for s in bi)
    assert all(s >= 0.0 for s in rm)
    plan = build_plan(Method.BI, 2.0, PlanInputs(n_layers=mlp_spec.n_layers, scores=bi))
    assert sum(plan.p) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        bi_scores(model, [])


_N_LAYERS = 6


def _random_inputs(rng):
    d = list(rng.uniform(0.0, 0.05, size=_N_LAYERS))
    scores = list(rng.uniform(0.0, 2.0, size=_N_LAYERS))
    return PlanInputs(n_layers=_N_LAYERS, profile=_profile(d), scores=scores)


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0, float(_N_LAYERS)])
@pytest.mark.parametrize("method", SAMPLING_METHODS)
def test_every_method_meets_budget_on_random_profiles(method, gamma):
    rng = np.random.default_rng([SAMPLING_METHODS.index(method), int(gamma)])
    for _ in range(50):
        p = build_plan(method, gamma, _random_inputs(rng)).p
        assert abs(sum(p) - gamma) <= 1e-9
        assert all(0.0 <= x <= 1.0 for x in p)


def _clips(weights, gamma):
    w = np.asarray(weights)
    return float(np.max(gamma * w / np.sum(w))) > 1.0


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0])
def test_reverse_order_mirrors_ows_when_nothing_clips(rng, gamma):
    checked = 0
    for _ in range(50):
        d = rng.uniform(0.01, 0.05, size=_N_LAYERS)
        reflected = d.max() + d.min() - d
        if _clips(d, gamma) or _clips(reflected, gamma):
            continue
        profile = _profile(list(d))
        ows = np.argsort(ows_probabilities(profile, gamma).p, kind="stable")
        rev = np.argsort(reverse_ows_probabilities(profile, gamma).p, kind="stable")
        assert list(rev) == list(ows[::-1])
        checked += 1
    if gamma < 5.0:
        assert checked > 0


@pytest.mark.parametrize("method", [Method.BI, Method.RM])
def test_symmetric_blocks_collapse_to_uniform(rng, method):
    x_in = rng.standard_normal((6, 4))
    x_out = x_in + 0.3 * rng.standard_normal((6, 4))
    primitive = block_influence if method == Method.BI else relative_magnitude
    scores = [primitive(x_in, x_out)] * _N_LAYERS
    plan = build_plan(method, 2.0, PlanInputs(n_layers=_N_LAYERS, scores=scores))
    assert plan.p == lisa_probabilities(_N_LAYERS, 2.0).p


@pytest.mark.parametrize("mode", list(SamplingMode))
def test_mean_active_count_matches_budget(mode):
    plan = ows_probabilities(_profile([0.1, 0.3, 0.05, 0.6, 0.2]), gamma=2.0)
    periods = 20_000
    sizes = np.array([len(draw_active_set(plan, seed=5, period_index=t, mode=mode)) for t in range(periods)])
    p = np.asarray(plan.p)
    sigma = np.sqrt(np.sum(p * (1.0 - p)) / periods)
    assert abs(sizes.mean() - plan.gamma) <= 3.0 * sigma + 1e-12
