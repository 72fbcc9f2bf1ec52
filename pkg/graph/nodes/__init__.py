"""
Node implementations for the data-mixture optimizer.

Each node is a function that takes RunState and returns updated RunState; one
node per phase of a BO iteration.
"""

from graph.nodes.acquirer import propose_mixing_ratio
from graph.nodes.budget import check_budget, should_continue
from graph.nodes.estimator import estimate_mixture
from graph.nodes.recorder import record_observation
from graph.nodes.refitter import refit_surrogate

__all__ = [
    "check_budget",
    "should_continue",
    "refit_surrogate",
    "propose_mixing_ratio",
    "estimate_mixture",
    "record_observation",
]
