"""
Refit node: maximum-likelihood lengthscale before each acquisition.
"""

import logging

from graph.state import RunState
from surrogate.gp import KernelParams, refit, with_kernel

logger = logging.getLogger(__name__)


def refit_surrogate(state: RunState) -> RunState:
    """
    Refits the GP lengthscale once at least two observations exist.

    With fewer observations the default lengthscale is used.

    Args:
        state: RunState with the current surrogate

    Returns:
        Updated RunState with a refitted surrogate
    """
    config = state["config"]
    gp = state["gp"]
    if len(state["history"]) >= 2:
        gp = refit(gp, config.lengthscale_grid())
        logger.debug("[REFIT] lengthscale %.4g", gp.kernel.lengthscale)
    elif gp.kernel.lengthscale != config.default_lengthscale:
        gp = with_kernel(gp, KernelParams(lengthscale=config.default_lengthscale))
    state["gp"] = gp
    return state
