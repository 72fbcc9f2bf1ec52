import json

import numpy as np
import pytest

from errors import BudgetExhausted, ConfigInvalid, EvaluatorFailure, UnknownOptimum
from experiments.synthetic import quadratic_task, synthetic_domains
from graph.engine import (
    build_graph,
    build_manifest,
    init_run,
    optimum_for,
    replay_history,
    resume_run,
    run_to_completion,
    run_uniform_baseline,
    step,
)
from graph.state import EstimatorKind, MixingRatio, ratio_of
from rundir import GP_CHECKPOINT_FILE, OBSERVATIONS_FILE, RESULT_FILE, manifest_path, read_observations
from tools.evaluators import Evaluator, EvaluatorHandle, EvaluatorKind, SyntheticEvaluator
from tools.influence import uniform_weights


class FlakyEvaluator(Evaluator):
    """Quadratic loss that fails on one iteration."""

    def __init__(self, fail_iteration):
        self.fail_iteration = fail_iteration
        self.supports_concurrency = False

    def __call__(self, manifest, iteration, sample_index, seed):
        if iteration == self.fail_iteration:
            raise RuntimeError("node lost")
        diff = ratio_of(manifest).as_array() - np.array([0.3, 0.7])
        return float(diff @ diff)


def test_graph_compiles_with_expected_nodes():
    nodes = set(build_graph(loop=True).get_graph().nodes)
    assert {"check_budget", "refit_surrogate", "propose_ratio", "estimate_mixture",
            "record_observation"} <= nodes
    assert "check_budget" not in set(build_graph(loop=False).get_graph().nodes)


def test_init_evaluates_uniform_ratio(small_config, two_domains, quadratic_evaluator):
    state = init_run(small_config, two_domains, quadratic_evaluator)
    assert len(state["history"]) == 1
    assert state["history"][0].ratio == MixingRatio(weights=(0.5, 0.5))
    assert state["gp"].size == 1
    assert state["best"].loss == state["history"][0].loss
    assert state["iteration"] == 1
    again = init_run(small_config, two_domains, quadratic_evaluator)
    assert again["history"][0].manifest_digest == state["history"][0].manifest_digest


def test_init_accepts_a_handle(small_config, two_domains):
    handle = EvaluatorHandle(kind=EvaluatorKind.SYNTHETIC_QUADRATIC,
                             params={"optimum_ratio": {"weights": [0.3, 0.7]}})
    state = init_run(small_config, two_domains, handle)
    assert state["history"][0].loss == pytest.approx(0.08)


def test_domain_count_must_match(small_config, quadratic_evaluator):
    with pytest.raises(ConfigInvalid):
        init_run(small_config, synthetic_domains(3, size=30), quadratic_evaluator)


def test_step_grows_history_and_keeps_best_monotone(small_config, two_domains, quadratic_evaluator):
    state = init_run(small_config, two_domains, quadratic_evaluator)
    bests = [state["best"].loss]
    for t in range(small_config.iterations):
        previous = len(state["history"])
        state = step(state)
        assert len(state["history"]) == previous + 1
        assert state["gp"].size == len(state["history"])
        bests.append(state["best"].loss)
    assert all(a >= b for a, b in zip(bests, bests[1:]))
    assert state["best"].loss == min(o.loss for o in state["history"])
    with pytest.raises(BudgetExhausted):
        step(state)


def test_failed_step_leaves_state_unchanged(small_config, two_domains):
    state = init_run(small_config, two_domains, FlakyEvaluator(fail_iteration=2))
    state = step(state)
    before = dict(state)
    with pytest.raises(EvaluatorFailure):
        step(state)
    assert state["history"] == before["history"]
    assert state["gp"] is before["gp"]
    assert state["iteration"] == 2


def test_zero_iterations_returns_initial_observation(small_config, two_domains, quadratic_evaluator):
    state = run_to_completion(small_config.model_copy(update={"iterations": 0}), two_domains, quadratic_evaluator)
    assert len(state["history"]) == 1
    assert state["best"].iteration == 0


def test_run_finds_the_quadratic_optimum(two_domains, quadratic_evaluator, small_config):
    # M=20 quantises the ratio to steps of 0.05, coarse enough to flatten the fitted surface
    config = small_config.model_copy(update={"mixture_size": 40, "iterations": 10,
                                          "n_candidates": 4096, "n_refine_steps": 50})
    state = run_to_completion(config, two_domains, quadratic_evaluator)
    assert len(state["history"]) == 11
    best_ratio = np.array(state["best"].manifest.target_ratio.weights)
    assert np.max(np.abs(best_ratio - np.array([0.3, 0.7]))) <= 0.15


def test_maximize_tracks_the_largest_feedback(small_config, two_domains):
    class Accuracy(Evaluator):
        def __call__(self, manifest, iteration, sample_index, seed):
            return 1.0 - abs(ratio_of(manifest).weights[0] - 0.6)

    config = small_config.model_copy(update={"maximize": True})
    state = run_to_completion(config, two_domains, Accuracy())
    raw = [-o.loss for o in state["history"]]
    assert -state["best"].loss == max(raw)


def test_run_directory_and_determinism(tmp_path, small_config, two_domains, quadratic_evaluator):
    first, second = tmp_path / "one", tmp_path / "two"
    state = run_to_completion(small_config, two_domains, quadratic_evaluator, run_dir=first)
    run_to_completion(small_config, two_domains, quadratic_evaluator, run_dir=second)
    assert (first / OBSERVATIONS_FILE).read_bytes() == (second / OBSERVATIONS_FILE).read_bytes()
    assert (first / GP_CHECKPOINT_FILE).exists()
    assert manifest_path(first, small_config.iterations, 0).exists()
    result = json.loads((first / RESULT_FILE).read_text(encoding="utf-8"))
    assert result["best_loss"] == state["best"].loss
    assert len(read_observations(first)) == small_config.iterations + 1


def test_aborted_run_keeps_partial_log(tmp_path, small_config, two_domains):
    with pytest.raises(EvaluatorFailure):
        run_to_completion(small_config, two_domains, FlakyEvaluator(fail_iteration=3), run_dir=tmp_path)
    assert [o.iteration for o in read_observations(tmp_path)] == [0, 1, 2]
    assert not (tmp_path / RESULT_FILE).exists()


def test_resumed_run_matches_uninterrupted_run(tmp_path, small_config, two_domains, quadratic_evaluator):
    full = run_to_completion(small_config, two_domains, quadratic_evaluator)

    state = init_run(small_config, two_domains, quadratic_evaluator, run_dir=tmp_path)
    state = step(state)
    resumed = resume_run(small_config, two_domains, quadratic_evaluator, tmp_path)
    assert resumed["history"] == state["history"]
    for _ in range(small_config.iterations - 1):
        resumed = step(resumed)
    assert resumed["history"] == full["history"]
    assert resumed["best"] == full["best"]


def test_replay_reproduces_history(small_config, two_domains):
    evaluator = SyntheticEvaluator(quadratic_task([0.3, 0.7], noise_cutoff=0.5), two_domains)
    config = small_config.model_copy(update={"sampling_size": 2})
    state = run_to_completion(config, two_domains, evaluator)
    assert replay_history(config, two_domains, state["history"]).identical

    tampered = list(state["history"])
    tampered[2] = tampered[2].model_copy(update={"loss": tampered[2].loss + 1.0})
    report = replay_history(config, two_domains, tampered)
    assert not report.identical
    assert report.first_mismatch == 2


def test_uniform_baseline_uses_uniform_selection(small_config, two_domains, quadratic_evaluator):
    result = run_uniform_baseline(small_config, two_domains, quadratic_evaluator)
    assert len(result.all_losses) == 1
    assert result.value == pytest.approx(0.08)


def test_build_manifest_thirds():
    domains = synthetic_domains(3, size=10)
    weights = [uniform_weights(d) for d in domains]
    manifest = build_manifest(MixingRatio.uniform(3), 10, domains, weights, EstimatorKind.UNIFORM_RANDOM, seed=0)
    assert [len(ids) for ids in manifest.selections.values()] == [4, 3, 3]


def test_optimum_follows_the_feedback_direction(small_config, quadratic_evaluator):
    assert optimum_for(small_config, quadratic_evaluator) == 0.0
    with pytest.raises(UnknownOptimum):
        optimum_for(small_config.model_copy(update={"maximize": True}), quadratic_evaluator)

    class Accuracy(Evaluator):
        f_star = 0.9
        f_star_is_maximum = True

        def __call__(self, manifest, iteration, sample_index, seed):
            return 0.5

    assert optimum_for(small_config.model_copy(update={"maximize": True}), Accuracy()) == -0.9
    with pytest.raises(UnknownOptimum):
        optimum_for(small_config, Accuracy())
