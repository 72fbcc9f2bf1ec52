"""
LCB acquisition over the probability simplex.

Candidates are Dirichlet(1) draws plus the observed ratios plus the uniform
ratio; the best one is polished by coordinatewise moves projected back onto
the simplex.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from graph.state import MixingRatio, RunConfig, validate_ratio
from surrogate.gp import GPState, posterior_batch
from tools.seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)

STEP_DECAY = 0.7


class AcquireConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: float = Field(default=0.5, ge=0)
    n_candidates: int = Field(default=4096, gt=0)
    n_refine_steps: int = Field(default=50, ge=0)
    refine_step_size: float = Field(default=0.05, gt=0)

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "AcquireConfig":
        return cls(
            beta=config.beta,
            n_candidates=config.n_candidates,
            n_refine_steps=config.n_refine_steps,
            refine_step_size=config.refine_step_size,
        )


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of `v` onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def lcb_values(state: GPState, points: np.ndarray, beta: float) -> np.ndarray:
    mean, std = posterior_batch(state, points)
    return mean - beta * std


def lcb_value(state: GPState, r: MixingRatio, beta: float) -> float:
    """mu(r) - beta * sigma(r)."""
    return float(lcb_values(state, np.asarray([r.weights]), beta)[0])


def _argmin_lexicographic(values: np.ndarray, points: np.ndarray) -> int:
    best = values.min()
    tied = np.flatnonzero(values == best)
    if tied.size == 1:
        return int(tied[0])
    order = np.lexsort(points[tied].T[::-1])
    return int(tied[order[0]])


def candidate_set(state: GPState, n_candidates: int, rng: np.random.Generator) -> np.ndarray:
    n = state.n_domains
    parts = [rng.dirichlet(np.ones(n), size=n_candidates)]
    if state.size:
        parts.append(state.input_matrix())
    parts.append(np.full((1, n), 1.0 / n))
    return np.vstack(parts)


def refine(state: GPState, start: np.ndarray, start_value: float, cfg: AcquireConfig):
    """Coordinatewise +/- moves with decaying step; only improving moves are taken."""
    n = start.shape[0]
    current, current_value = start.copy(), start_value
    step = cfg.refine_step_size
    directions = np.vstack([np.eye(n), -np.eye(n)])
    for _ in range(cfg.n_refine_steps):
        moves = project_to_simplex(current[None, :] + step * directions)
        values = lcb_values(state, moves, cfg.beta)
        i = _argmin_lexicographic(values, moves)
        if values[i] < current_value:
            current, current_value = moves[i], float(values[i])
        step *= STEP_DECAY
    return current, current_value


def propose_ratio(state: GPState, cfg: AcquireConfig, rng_seed: SeedLike,
                  log_prefix: Optional[str] = None) -> MixingRatio:
    """
    Minimizes the LCB acquisition over the simplex.

    Args:
        state: GP posterior over all observations so far (may be empty)
        cfg: Acquisition settings
        rng_seed: Seed for the candidate draw

    Returns:
        The proposed mixing ratio
    """
    rng = as_generator(rng_seed)
    candidates = candidate_set(state, cfg.n_candidates, rng)
    values = lcb_values(state, candidates, cfg.beta)
    i = _argmin_lexicographic(values, candidates)
    best, best_value = refine(state, candidates[i], float(values[i]), cfg)
    if log_prefix:
        logger.debug("%s best LCB %.6f (raw candidate %.6f)", log_prefix, best_value, values[i])
    return validate_ratio(best.tolist(), n_domains=state.n_domains)
