"""
Acquirer node: proposes the next mixing ratio by minimizing the LCB.
"""

import logging

from graph.state import RunState
from tools.acquisition import AcquireConfig, propose_ratio
from tools.seeding import ACQUIRE, derive_seed

logger = logging.getLogger(__name__)


def propose_mixing_ratio(state: RunState) -> RunState:
    """
    Runs the BO acquisition step on the current surrogate.

    Args:
        state: RunState with a fitted surrogate

    Returns:
        Updated RunState with the proposed ratio in _proposal
    """
    iteration = state["iteration"]
    seed = derive_seed(state["rng_root_seed"], ACQUIRE, iteration)
    proposal = propose_ratio(
        state["gp"],
        AcquireConfig.from_run_config(state["config"]),
        seed,
        log_prefix=f"[ACQUIRE] iteration {iteration}:",
    )
    logger.debug("[ACQUIRE] iteration %d proposes %s", iteration, _fmt(proposal.weights))
    state["_proposal"] = proposal
    return state


def _fmt(weights) -> str:
    return "[" + ", ".join(f"{w:.4f}" for w in weights) + "]"
