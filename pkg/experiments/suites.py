"""
Statistical validation suites behind `main.py validate`.

Each suite returns a SuiteResult with pass/fail and the statistics it was
decided on; the CLI prints them and maps the verdict to an exit code.
"""

import logging
import math
from enum import Enum
from typing import Callable, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats
from tqdm import tqdm

from experiments.synthetic import quadratic_task, ridge_problem
from graph.state import DataPoint, DomainDataset, MixingRatio, MixtureManifest
from surrogate.gp import KernelParams, build_gp_state, posterior_batch, se_kernel
from tools.evaluators import SyntheticEvaluator, evaluate
from tools.influence import (
    RidgeProblem,
    leave_one_out_deltas,
    normalize_weights,
    ridge_fit,
    ridge_influences,
    ridge_test_loss,
    sample_domain,
)
from tools.order_stats import TruncExpParams, order_stat_cdf, pdf_mass, sample_order_stats, truncexp_cdf
from tools.seeding import VALIDATE, derive_rng, derive_seed

logger = logging.getLogger(__name__)

KS_ALPHA = 0.01


class Suite(str, Enum):
    ORDER_STATS = "order_stats"
    SAMPLING = "sampling"
    GP_ORACLE = "gp_oracle"
    RIDGE_IF = "ridge_if"

    @classmethod
    def _missing_(cls, value):
        return SUITE_ALIASES.get(value)


# another command-line name for the order-statistics suite
SUITE_ALIASES = {"theorem2": Suite.ORDER_STATS}
SUITE_NAMES = [s.value for s in Suite] + list(SUITE_ALIASES)


class SuiteResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    suite: Suite
    passed: bool
    statistics: Dict[str, float]
    failures: List[str] = []


def _verdict(suite: Suite, statistics: Dict[str, float], failures: List[str]) -> SuiteResult:
    for failure in failures:
        logger.warning("[VALIDATE] %s: %s", suite.value, failure)
    return SuiteResult(suite=suite, passed=not failures, statistics=statistics, failures=failures)


def order_stats_suite(seed: int = 0, n_draws: int = 100_000, n_evaluator_draws: int = 10_000,
                   quiet: bool = False) -> SuiteResult:
    """
    Min of k truncated-exponential draws against the closed-form order-statistic
    law, plus the noise a synthetic_truncexp evaluator actually adds.
    """
    statistics: Dict[str, float] = {}
    failures: List[str] = []
    for k in tqdm((1, 2, 5), desc="order_stats", disable=quiet):
        p = TruncExpParams(rate=1.0, cutoff=1.0, k=k)
        draws = sample_order_stats(p, n_draws, derive_seed(seed, VALIDATE, 1, k))
        result = stats.kstest(draws, np.vectorize(lambda u: order_stat_cdf(u, p)))
        mass, _ = pdf_mass(p)
        statistics[f"k{k}_ks_pvalue"] = float(result.pvalue)
        statistics[f"k{k}_pdf_mass"] = mass
        if result.pvalue <= KS_ALPHA:
            failures.append(f"k={k}: KS p-value {result.pvalue:.4g} <= {KS_ALPHA}")
        if abs(mass - 1.0) > 1e-8:
            failures.append(f"k={k}: pdf integrates to {mass!r}")

    # evaluator noise: losses at a fixed manifest lie in [f, f + c] and follow the law
    cutoff = 0.5
    domain = DomainDataset(name="d0", points=(DataPoint(point_id="p0", influence=0.0),
                                              DataPoint(point_id="p1", influence=1.0)))
    other = DomainDataset(name="d1", points=(DataPoint(point_id="q0", influence=0.0),
                                             DataPoint(point_id="q1", influence=1.0)))
    evaluator = SyntheticEvaluator(quadratic_task([0.5, 0.5], noise_cutoff=cutoff, base_loss=0.2),
                                   [domain, other], require_noise=True)
    manifest = MixtureManifest(selections={"d0": ("p0",), "d1": ("q0",)},
                               target_ratio=MixingRatio.uniform(2), total_size=2)
    f = evaluator.noiseless_loss(manifest)
    noise_seed = derive_seed(seed, VALIDATE, 2)
    losses = np.asarray([evaluate(evaluator, manifest, i, 0, noise_seed) for i in range(n_evaluator_draws)])
    offsets = losses - f
    law = TruncExpParams(rate=1.0, cutoff=cutoff, k=1)
    result = stats.kstest(offsets, np.vectorize(lambda u: truncexp_cdf(u, law)))
    statistics["evaluator_ks_pvalue"] = float(result.pvalue)
    statistics["evaluator_min_offset"] = float(offsets.min())
    statistics["evaluator_max_offset"] = float(offsets.max())
    if offsets.min() < -1e-12 or offsets.max() > cutoff + 1e-12:
        failures.append("evaluator noise left [0, c]")
    if result.pvalue <= KS_ALPHA:
        failures.append(f"evaluator noise KS p-value {result.pvalue:.4g} <= {KS_ALPHA}")
    return _verdict(Suite.ORDER_STATS, statistics, failures)


def sampling_suite(seed: int = 0, n_draws: int = 1_000_000, n_trials: int = 10_000,
                   tolerance: float = 0.002, quiet: bool = False) -> SuiteResult:
    """IF-weighted draws: marginals match the normalized weights; no repeats without replacement."""
    domain = DomainDataset(name="three", points=tuple(
        DataPoint(point_id=f"p{i}", influence=v) for i, v in enumerate((-1.0, 0.5, 2.0))
    ))
    weights = normalize_weights(domain, shift_epsilon=1.0)
    probs = np.asarray(weights.probs)

    draws = sample_domain(weights, n_draws, with_replacement=True, rng_seed=derive_seed(seed, VALIDATE, 3))
    index = {pid: i for i, pid in enumerate(weights.point_ids)}
    counts = np.bincount([index[pid] for pid in draws], minlength=len(probs))
    error = float(np.max(np.abs(counts / n_draws - probs)))

    repeats = 0
    first = np.zeros(len(probs))
    for trial in tqdm(range(n_trials), desc="sampling", disable=quiet):
        ids = sample_domain(weights, 2, with_replacement=False, rng_seed=derive_seed(seed, VALIDATE, 4, trial))
        repeats += len(set(ids)) != len(ids)
        first[index[ids[0]]] += 1
    first_error = float(np.max(np.abs(first / n_trials - probs)))

    failures = []
    if error > tolerance:
        failures.append(f"marginal error {error:.5f} > {tolerance}")
    if repeats:
        failures.append(f"{repeats} without-replacement draws repeated an id")
    # first draw of a sequential draw follows the weights; binomial noise at n_trials
    first_tolerance = 5.0 * math.sqrt(0.25 / n_trials)
    if first_error > first_tolerance:
        failures.append(f"first-draw marginal error {first_error:.4f} > {first_tolerance:.4f}")
    return _verdict(Suite.SAMPLING, {
        "marginal_max_abs_error": error,
        "first_draw_max_abs_error": first_error,
        "repeats": float(repeats),
    }, failures)


def _dense_posterior(x: np.ndarray, y: np.ndarray, q: np.ndarray, params: KernelParams, zeta: float):
    """Explicit matrix inverse, kernel evaluated entry by entry."""
    ratios = [MixingRatio(weights=tuple(row)) for row in x]
    queries = [MixingRatio(weights=tuple(row)) for row in q]
    gram = np.array([[se_kernel(a, b, params) for b in ratios] for a in ratios])
    inverse = np.linalg.inv(gram + zeta * np.eye(len(ratios)))
    cross = np.array([[se_kernel(a, b, params) for b in queries] for a in ratios])
    mean = cross.T @ inverse @ y
    var = params.signal_variance - np.einsum("iq,ij,jq->q", cross, inverse, cross)
    return mean, var


def gp_oracle_suite(seed: int = 0, n_datasets: int = 20, tolerance: float = 1e-8,
                    quiet: bool = False) -> SuiteResult:
    """GP posterior against a dense direct-inverse oracle on random simplex data."""
    worst_mean = 0.0
    worst_var = 0.0
    for i in tqdm(range(n_datasets), desc="gp_oracle", disable=quiet):
        rng = derive_rng(seed, VALIDATE, 5, i)
        n = int(rng.integers(2, 10))
        t = int(rng.integers(1, 13))
        x = rng.dirichlet(np.ones(n), size=t)
        y = rng.normal(size=t)
        q = rng.dirichlet(np.ones(n), size=8)
        params = KernelParams(lengthscale=float(10 ** rng.uniform(-1, 1)))
        state = build_gp_state(n, [MixingRatio(weights=tuple(r)) for r in x], y.tolist(),
                               kernel=params, zeta=0.01)
        mean, std = posterior_batch(state, q)
        oracle_mean, oracle_var = _dense_posterior(x, y, q, params, 0.01)
        worst_mean = max(worst_mean, float(np.max(np.abs(mean - oracle_mean))))
        worst_var = max(worst_var, float(np.max(np.abs(std ** 2 - np.clip(oracle_var, 0.0, None)))))
    failures = []
    if worst_mean > tolerance:
        failures.append(f"posterior mean off by {worst_mean:.3g}")
    if worst_var > tolerance:
        failures.append(f"posterior variance off by {worst_var:.3g}")
    return _verdict(Suite.GP_ORACLE, {"max_mean_error": worst_mean, "max_variance_error": worst_var}, failures)


def _removal_helps(problem: RidgeProblem) -> bool:
    influences = ridge_influences(problem)
    worst = int(np.argmin(influences))
    base = ridge_test_loss(problem, ridge_fit(problem.features, problem.labels, problem.reg_lambda))
    keep = np.arange(problem.features.shape[0]) != worst
    removed = ridge_test_loss(problem, ridge_fit(problem.features[keep], problem.labels[keep], problem.reg_lambda))
    return removed < base


def ridge_if_suite(seed: int = 0, n_sign_problems: int = 100, min_correlation: float = 0.9,
                   min_sign_rate: float = 0.95, quiet: bool = False) -> SuiteResult:
    """Ridge influences against exact leave-one-out retraining."""
    problem = ridge_problem(n=200, d=5, seed=derive_seed(seed, VALIDATE, 6))
    influences = ridge_influences(problem)
    deltas = leave_one_out_deltas(problem)
    correlation = float(stats.pearsonr(influences, deltas)[0])

    helped = sum(
        _removal_helps(ridge_problem(n=200, d=5, seed=derive_seed(seed, VALIDATE, 7, i)))
        for i in tqdm(range(n_sign_problems), desc="ridge_if", disable=quiet)
    )
    sign_rate = helped / n_sign_problems
    failures = []
    if correlation < min_correlation:
        failures.append(f"Pearson correlation {correlation:.4f} < {min_correlation}")
    if sign_rate < min_sign_rate:
        failures.append(f"removing the most harmful point helped in {sign_rate:.0%} of problems")
    return _verdict(Suite.RIDGE_IF, {"pearson": correlation, "sign_rate": sign_rate}, failures)


SUITES: Dict[Suite, Callable[..., SuiteResult]] = {
    Suite.ORDER_STATS: order_stats_suite,
    Suite.SAMPLING: sampling_suite,
    Suite.GP_ORACLE: gp_oracle_suite,
    Suite.RIDGE_IF: ridge_if_suite,
}


def run_suite(suite: Suite, seed: int = 0, quiet: bool = False) -> SuiteResult:
    logger.info("[VALIDATE] running %s (seed %d)", suite.value, seed)
    return SUITES[suite](seed=seed, quiet=quiet)
