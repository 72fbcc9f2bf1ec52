"""
Estimator node: solves the inner problem at the proposed ratio.
"""

import logging

from graph.state import RunState
from tools.estimator import estimate_inner
from tools.seeding import ESTIMATE, derive_seed

logger = logging.getLogger(__name__)


def estimate_mixture(state: RunState) -> RunState:
    """
    Samples k mixtures at the proposed ratio and keeps the best one.

    Args:
        state: RunState with _proposal set

    Returns:
        Updated RunState with _estimate set
    """
    iteration = state["iteration"]
    config = state["config"]
    estimate = estimate_inner(
        state["_proposal"],
        state["domains"],
        config,
        state["evaluator"],
        derive_seed(state["rng_root_seed"], ESTIMATE, iteration),
        iteration=iteration,
        weights=state["_weights"],
    )
    logger.debug("[ESTIMATE] iteration %d: %d sample(s), min loss %.6f",
                 iteration, config.sampling_size, estimate.value)
    state["_estimate"] = estimate
    return state
