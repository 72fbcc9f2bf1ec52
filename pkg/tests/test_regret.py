import csv
import math
from decimal import Decimal, getcontext

import pytest

from errors import DomainError, UnknownOptimum
from experiments.synthetic import quadratic_task, synthetic_domains
from graph.engine import optimum_for, run_to_completion
from graph.state import EstimatorKind, MixingRatio, Observation, RunConfig
from tools.evaluators import SyntheticEvaluator
from tools.regret import average_regret_bound, bound_constant, compute_trace, write_trace_csv


def _history(losses):
    return [Observation(ratio=MixingRatio.uniform(2), loss=loss, iteration=t, manifest_digest=str(t))
            for t, loss in enumerate(losses)]


def _bound_constant_decimal(c, k):
    getcontext().prec = 50
    c = Decimal(c)
    one_minus = 1 - (-c).exp()
    return c * c * (one_minus - c / 2) ** (k - 1) / one_minus ** k


def test_trace_arithmetic():
    trace = compute_trace(_history([1.5, 1.0]), 0.5)
    assert trace.per_step == [1.0, 0.5]
    assert trace.cumulative == [1.0, 1.5]
    assert trace.average == [1.0, 0.75]


def test_trace_at_optimum_is_zero():
    assert compute_trace(_history([0.2, 0.2, 0.2]), 0.2).cumulative == [0.0, 0.0, 0.0]


def test_trace_needs_known_optimum():
    with pytest.raises(UnknownOptimum):
        compute_trace(_history([1.0]), None)


def test_bound_constant_examples():
    assert bound_constant(1.0, 1) == pytest.approx(1.58198, abs=1e-5)
    assert bound_constant(1.0, 2) == pytest.approx(0.33065, abs=1e-5)
    values = [bound_constant(1.0, k) for k in (1, 2, 3, 4)]
    assert all(a > b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("c,k", [(1.0, 1), (1.0, 4), (0.3, 2), (0.05, 7), (0.9, 16)])
def test_bound_constant_matches_high_precision(c, k):
    expected = float(_bound_constant_decimal(c, k))
    assert bound_constant(c, k) == pytest.approx(expected, rel=1e-12)


def test_bound_constant_domain():
    with pytest.raises(DomainError):
        bound_constant(1.5, 1)
    with pytest.raises(DomainError):
        bound_constant(0.0, 1)
    with pytest.raises(DomainError):
        bound_constant(0.5, 0)


def test_average_bound_examples():
    a = bound_constant(1.0, 3)
    assert average_regret_bound(1.0, 3, 1.0) == pytest.approx(6 * (1 + math.sqrt(3)) / 3 + 2 * a + math.sqrt(2 * a))
    assert average_regret_bound(1.0, 1, 0.0625) == pytest.approx(24.72, abs=5e-3)
    bounds = [average_regret_bound(1.0, k, 0.0625) for k in range(1, 17)]
    assert all(x > y for x, y in zip(bounds, bounds[1:]))
    with pytest.raises(DomainError):
        average_regret_bound(1.0, 1, 0.0)


def test_trace_csv(tmp_path):
    path = tmp_path / "report" / "regret.csv"
    write_trace_csv(compute_trace(_history([1.5, 1.0]), 0.5), path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "loss", "per_step", "cumulative", "average"]
    assert rows[2] == ["2", "1.0", "0.5", "1.5", "0.75"]


def test_noiseless_run_average_regret_shrinks(two_domains, quadratic_evaluator, small_config):
    config = small_config.model_copy(update={"mixture_size": 40, "iterations": 10})
    state = run_to_completion(config, two_domains, quadratic_evaluator)
    trace = compute_trace(state["history"], optimum_for(config, quadratic_evaluator))
    assert trace.average[10] <= trace.average[5]
    assert all(a <= b for a, b in zip(trace.cumulative, trace.cumulative[1:]))


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 4])
def test_average_regret_stays_under_the_bound(k):
    domains = synthetic_domains(2, size=100, seed=9)
    evaluator = SyntheticEvaluator(quadratic_task([0.3, 0.7], noise_cutoff=1.0), domains, require_noise=True)
    bound = average_regret_bound(1.0, k, 0.1)
    for seed in range(20):
        config = RunConfig(n_domains=2, mixture_size=40, sampling_size=k, iterations=200, seed=seed,
                           estimator_kind=EstimatorKind.UNIFORM_RANDOM, n_candidates=256, n_refine_steps=10)
        history = run_to_completion(config, domains, evaluator)["history"]
        assert compute_trace(history, evaluator.f_star).average[-1] < bound
