"""
Inner-problem estimator.

At a fixed mixing ratio, draw k data mixtures with the configured selection
method, evaluate all of them, and keep the smallest loss as the estimate of the
best loss attainable at that ratio.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import DimensionMismatch, EvaluatorFailure
from graph.state import DomainDataset, MixingRatio, MixtureManifest, RunConfig
from tools.evaluators import Evaluator, evaluate
from tools.influence import NormalizedWeights
from tools.mixture import build_manifest, weights_for_domains
from tools.order_stats import (  # noqa: F401  (re-exported: the estimator's noise law)
    TruncExpParams,
    expected_min,
    order_stat_cdf,
    order_stat_pdf,
    order_stat_quantile,
    sample_order_stat,
    sample_order_stats,
)
from tools.seeding import SAMPLE, derive_seed

logger = logging.getLogger(__name__)


class EstimateResult(BaseModel):
    """Minimum of k evaluated losses and the mixture that attained it."""

    model_config = ConfigDict(frozen=True)

    value: float
    best_manifest: MixtureManifest
    best_index: int
    all_losses: Tuple[float, ...]
    all_digests: Tuple[str, ...]
    manifests: Tuple[MixtureManifest, ...] = ()


def _evaluate_all(evaluator: Evaluator, manifests: List[MixtureManifest], iteration: int,
                  seed: int, max_workers: int) -> List[float]:
    k = len(manifests)

    def run(i: int) -> float:
        return evaluate(evaluator, manifests[i], iteration, i, seed)

    if not evaluator.supports_concurrency or k == 1 or max_workers <= 1:
        results = []
        for i in range(k):
            try:
                results.append(run(i))
            except EvaluatorFailure as e:
                e.sample_index = i
                raise
        return results

    with ThreadPoolExecutor(max_workers=min(k, max_workers)) as pool:
        futures = [pool.submit(run, i) for i in range(k)]
    results = []
    for i, future in enumerate(futures):
        error = future.exception()
        if error is not None:
            if isinstance(error, EvaluatorFailure):
                error.sample_index = i
            raise error
        results.append(future.result())
    return results


def estimate_inner(
    ratio: MixingRatio,
    domains: Sequence[DomainDataset],
    cfg: RunConfig,
    evaluator: Evaluator,
    rng_seed: int,
    iteration: int = 0,
    weights: Optional[Sequence[NormalizedWeights]] = None,
) -> EstimateResult:
    """
    Estimates the best loss attainable at `ratio` from k sampled mixtures.

    All k manifests are drawn first, then evaluated (concurrently when the
    evaluator allows it). Sample i always draws from the stream derived from
    (rng_seed, i), so completion order never changes the result. Feedback is
    negated when cfg.maximize is set so the result is always a loss.

    Args:
        ratio: Mixing ratio to estimate at
        domains: Training domains, in ratio order
        cfg: Run configuration (k, M, estimator kind, ...)
        evaluator: Black-box evaluator
        rng_seed: Seed for this estimate
        iteration: BO iteration, passed through to the evaluator
        weights: Precomputed selection weights (computed from cfg when None)

    Returns:
        EstimateResult with the minimum and every sample's loss and digest
    """
    if ratio.n_domains != len(domains):
        raise DimensionMismatch(f"ratio has {ratio.n_domains} weights for {len(domains)} domains")
    if weights is None:
        weights = weights_for_domains(domains, cfg.estimator_kind, cfg)
    manifests = [
        build_manifest(ratio, cfg.mixture_size, domains, weights, cfg.estimator_kind,
                       derive_seed(rng_seed, SAMPLE, i), cfg.with_replacement)
        for i in range(cfg.sampling_size)
    ]
    raw = _evaluate_all(evaluator, manifests, iteration, rng_seed, cfg.max_workers)
    losses = [-x if cfg.maximize else x for x in raw]
    best = int(np.argmin(losses))
    logger.debug("[ESTIMATE] iteration %d: losses %s, min at sample %d", iteration, losses, best)
    return EstimateResult(
        value=losses[best],
        best_manifest=manifests[best],
        best_index=best,
        all_losses=tuple(losses),
        all_digests=tuple(m.digest for m in manifests),
        manifests=tuple(manifests),
    )
