import numpy as np
import pytest
from hypothesis import given, strategies as st

from errors import CountExceedsDomain, NonFiniteInfluence
from experiments.synthetic import ridge_problem
from graph.state import DataPoint, DomainDataset
from tests.conftest import make_domain
from tools.influence import (
    RidgeProblem,
    leave_one_out_deltas,
    load_influence_csv,
    normalize_weights,
    ridge_influences,
    sample_domain,
    write_influence_csv,
)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_weights(make_domain("a", [5, 5, 5]), 0.1).probs, [1 / 3] * 3)
    np.testing.assert_allclose(normalize_weights(make_domain("b", [-1, 1]), 1.0).probs, [1 / 4, 3 / 4])
    assert normalize_weights(make_domain("c", [42.0]), 0.5).probs == (1.0,)


def test_default_epsilon_is_relative():
    weights = normalize_weights(make_domain("a", [0.0, 10.0]))
    assert weights.shift_epsilon == pytest.approx(1e-6 * 11.0)
    assert min(weights.probs) > 0


@given(
    st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=2, max_size=20),
    st.floats(min_value=-50, max_value=50, allow_nan=False),
)
def test_normalize_shift_invariant_and_monotone(values, shift):
    base = normalize_weights(make_domain("a", values), 0.1)
    moved = normalize_weights(make_domain("a", [v + shift for v in values]), 0.1)
    np.testing.assert_allclose(base.probs, moved.probs, atol=1e-12)
    for i in range(len(values)):
        for j in range(len(values)):
            if values[i] > values[j] + 1e-6:
                assert base.probs[i] > base.probs[j]


def test_sampling_edge_cases():
    weights = normalize_weights(make_domain("a", [0.0, 1.0, 2.0, 3.0]), 0.1)
    assert sample_domain(weights, 0, rng_seed=1) == []
    assert sorted(sample_domain(weights, 4, rng_seed=1)) == sorted(weights.point_ids)
    with pytest.raises(CountExceedsDomain) as info:
        sample_domain(weights, 6, rng_seed=1)
    assert info.value.shortfall == 2
    assert len(sample_domain(weights, 6, with_replacement=True, rng_seed=1)) == 6


def test_sampling_is_deterministic_and_never_repeats():
    weights = normalize_weights(make_domain("a", np.linspace(-1, 1, 30)), 0.05)
    assert sample_domain(weights, 10, rng_seed=7) == sample_domain(weights, 10, rng_seed=7)
    for seed in range(200):
        ids = sample_domain(weights, 12, rng_seed=seed)
        assert len(set(ids)) == 12


def test_single_draw_marginal():
    weights = normalize_weights(make_domain("a", [-1.0, 1.0]), 1.0)
    draws = sample_domain(weights, 200_000, with_replacement=True, rng_seed=3)
    frequency = draws.count("a-1") / len(draws)
    assert abs(frequency - 3 / 4) < 0.005


def test_csv_round_trip_and_errors(tmp_path):
    domain = DomainDataset(name="web", points=(
        DataPoint(point_id="w0", influence=0.25, payload_ref="shard-0/w0.jsonl"),
        DataPoint(point_id="w1", influence=-1.5),
    ))
    path = tmp_path / "web.csv"
    write_influence_csv(domain, path)
    assert load_influence_csv(path) == domain

    with pytest.raises(FileNotFoundError, match="missing.csv"):
        load_influence_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("point_id,influence\na,0.5\nb,nan\n", encoding="utf-8")
    with pytest.raises(NonFiniteInfluence):
        load_influence_csv(bad)


def _tiny_problem(features, labels):
    x = np.asarray(features, dtype=float)
    return RidgeProblem(features=x, labels=np.asarray(labels, dtype=float), reg_lambda=1.0,
                        test_features=np.array([[1.0, 0.5], [0.2, -1.0]]), test_labels=np.array([0.3, -0.7]))


def test_zero_feature_point_has_zero_influence():
    problem = _tiny_problem([[1.0, 2.0], [0.0, 0.0], [-1.0, 0.5]], [1.0, 3.0, -0.2])
    assert ridge_influences(problem)[1] == 0.0


def test_duplicate_points_share_influence():
    problem = _tiny_problem([[1.0, 2.0], [1.0, 2.0], [-1.0, 0.5]], [1.0, 1.0, -0.2])
    values = ridge_influences(problem)
    assert values[0] == pytest.approx(values[1], abs=1e-14)


def test_ridge_influences_track_leave_one_out():
    problem = ridge_problem(n=200, d=5, seed=0)
    correlation = np.corrcoef(ridge_influences(problem), leave_one_out_deltas(problem))[0, 1]
    assert correlation >= 0.9


def test_removing_most_harmful_point_helps():
    helped = 0
    for seed in range(50):
        problem = ridge_problem(n=200, d=5, seed=seed)
        worst = int(np.argmin(ridge_influences(problem)))
        helped += leave_one_out_deltas(problem)[worst] < 0
    assert helped >= 48
