"""
Budget check node for the conditional edge that closes the BO loop.
"""

import logging

from graph.state import RunState

logger = logging.getLogger(__name__)


def check_budget(state: RunState) -> RunState:
    """
    Reports progress before each BO iteration.

    Args:
        state: Current RunState

    Returns:
        The state, unchanged
    """
    config = state["config"]
    done = state["iteration"] - 1
    if state["best"] is not None:
        logger.debug("[BUDGET] %d/%d iterations done, best loss %.6f",
                     done, config.iterations, state["best"].loss)
    return state


def should_continue(state: RunState) -> str:
    """
    Conditional edge function deciding whether to run another iteration.

    Args:
        state: Current RunState

    Returns:
        "continue" or "finish"
    """
    if state["iteration"] <= state["config"].iterations:
        return "continue"
    logger.info("[BUDGET] %d iterations done, finishing", state["config"].iterations)
    return "finish"
