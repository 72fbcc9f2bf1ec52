"""
Gaussian-process surrogate over mixing ratios.

Squared-exponential kernel, exact posterior mean/variance through a Cholesky
factor of (K + zeta*I), and grid-search maximum-likelihood lengthscales.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from errors import DimensionMismatch, InsufficientData, NumericalBreakdown
from graph.state import MixingRatio, Observation

logger = logging.getLogger(__name__)

JITTER_LADDER = [10.0 ** -e for e in range(10, 3, -1)]  # 1e-10 ... 1e-4
# round-off allowed in the posterior variance before it is clamped to zero
NEGATIVE_VARIANCE_TOLERANCE = 1e-8


class KernelParams(BaseModel):
    """SE kernel hyperparameters."""

    model_config = ConfigDict(frozen=True)

    lengthscale: float = Field(default=1.0, ge=1e-3, le=1e3)
    signal_variance: float = Field(default=1.0, gt=0)


@dataclass(frozen=True, eq=False)
class GPState:
    """
    Immutable GP posterior state.

    `targets` are kept raw; when `standardize` is set the posterior is computed
    on (y - mean) / std and de-standardized on the way out.
    """
    n_domains: int
    inputs: Tuple[MixingRatio, ...]
    targets: np.ndarray
    kernel: KernelParams
    zeta: float
    standardize: bool
    chol_factor: np.ndarray
    alpha: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    jitter: float = 0.0
    _x: np.ndarray = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.inputs)

    def input_matrix(self) -> np.ndarray:
        return self._x


def _gram(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    sq = cdist(a, b, metric="sqeuclidean")
    return params.signal_variance * np.exp(-sq / (2.0 * params.lengthscale ** 2))


def _factorize(gram: np.ndarray, zeta: float) -> Tuple[np.ndarray, float]:
    """Cholesky of gram + zeta*I, escalating a diagonal jitter before giving up."""
    base = gram + zeta * np.eye(gram.shape[0])
    try:
        return cholesky(base, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    for jitter in JITTER_LADDER:
        try:
            factor = cholesky(base + jitter * np.eye(gram.shape[0]), lower=True)
            logger.debug("Cholesky needed jitter %.0e", jitter)
            return factor, jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalBreakdown(
        f"K + zeta*I is not positive definite even with jitter {JITTER_LADDER[-1]:.0e}"
    )


def _standardization(targets: np.ndarray, standardize: bool) -> Tuple[float, float]:
    if not standardize or targets.size == 0:
        return 0.0, 1.0
    mean = float(np.mean(targets))
    scale = float(np.std(targets)) if targets.size >= 2 else 1.0
    return mean, (scale if scale > 0 else 1.0)


def _as_matrix(ratios: Sequence[MixingRatio], n_domains: int) -> np.ndarray:
    if not ratios:
        return np.zeros((0, n_domains))
    x = np.asarray([r.weights for r in ratios], dtype=float)
    if x.shape[1] != n_domains:
        raise DimensionMismatch(f"expected {n_domains}-domain ratios, got {x.shape[1]}")
    return x


def build_gp_state(
    n_domains: int,
    inputs: Sequence[MixingRatio],
    targets: Iterable[float],
    kernel: Optional[KernelParams] = None,
    zeta: float = 0.01,
    standardize: bool = False,
) -> GPState:
    """
    Factorizes the covariance of the given observations.

    Args:
        n_domains: Dimension of the mixing ratios
        inputs: Observed ratios
        targets: Observed losses, aligned with inputs
        kernel: Kernel hyperparameters (unit SE kernel by default)
        zeta: Noise term added to the diagonal
        standardize: Fit on standardized targets and de-standardize predictions

    Returns:
        GPState ready for posterior queries
    """
    kernel = kernel or KernelParams()
    x = _as_matrix(list(inputs), n_domains)
    y = np.asarray(list(targets), dtype=float)
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    y_mean, y_scale = _standardization(y, standardize)
    if x.shape[0] == 0:
        factor = np.zeros((0, 0))
        alpha = np.zeros(0)
        jitter = 0.0
    else:
        factor, jitter = _factorize(_gram(x, x, kernel), zeta)
        alpha = cho_solve((factor, True), (y - y_mean) / y_scale)
    return GPState(
        n_domains=n_domains,
        inputs=tuple(inputs),
        targets=y,
        kernel=kernel,
        zeta=zeta,
        standardize=standardize,
        chol_factor=factor,
        alpha=alpha,
        y_mean=y_mean,
        y_scale=y_scale,
        jitter=jitter,
        _x=x,
    )


def empty_state(n_domains: int, zeta: float = 0.01, standardize: bool = False,
                kernel: Optional[KernelParams] = None) -> GPState:
    return build_gp_state(n_domains, [], [], kernel=kernel, zeta=zeta, standardize=standardize)


def se_kernel(a: MixingRatio, b: MixingRatio, params: KernelParams) -> float:
    """signal_variance * exp(-||a - b||^2 / (2 m^2))."""
    if a.n_domains != b.n_domains:
        raise DimensionMismatch(f"cannot compare {a.n_domains}- and {b.n_domains}-domain ratios")
    diff = a.as_array() - b.as_array()
    return params.signal_variance * math.exp(-float(diff @ diff) / (2.0 * params.lengthscale ** 2))


def posterior_batch(state: GPState, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and standard deviation at each row of `queries`.

    Args:
        state: GP state
        queries: (q, n_domains) array of simplex points

    Returns:
        (mean, stddev) arrays of length q
    """
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if q.shape[1] != state.n_domains:
        raise DimensionMismatch(f"expected {state.n_domains}-domain queries, got {q.shape[1]}")
    prior_var = state.kernel.signal_variance
    if state.size == 0:
        mean = np.full(q.shape[0], state.y_mean)
        std = np.full(q.shape[0], math.sqrt(prior_var) * state.y_scale)
        return mean, std
    cross = _gram(state.input_matrix(), q, state.kernel)  # (t, q)
    mean = cross.T @ state.alpha
    v = solve_triangular(state.chol_factor, cross, lower=True)
    raw_var = prior_var - np.sum(v * v, axis=0)
    if raw_var.min() < -NEGATIVE_VARIANCE_TOLERANCE:
        logger.warning("[GP] posterior variance %.3e below zero before clamping (jitter %.0e)",
                       raw_var.min(), state.jitter)
    var = np.clip(raw_var, 0.0, prior_var)
    return mean * state.y_scale + state.y_mean, np.sqrt(var) * state.y_scale


def posterior(state: GPState, query: MixingRatio) -> Tuple[float, float]:
    """Posterior (mean, stddev) at a single ratio; the prior when the state is empty."""
    mean, std = posterior_batch(state, np.asarray([query.weights]))
    return float(mean[0]), float(std[0])


def log_marginal_likelihood(
    inputs: Sequence[MixingRatio],
    targets: Sequence[float],
    zeta: float,
    params: KernelParams,
) -> float:
    """Exact log p(y | X) of a zero-mean GP with SE kernel and diagonal noise zeta."""
    n_domains = inputs[0].n_domains
    x = _as_matrix(list(inputs), n_domains)
    y = np.asarray(list(targets), dtype=float)
    factor, _ = _factorize(_gram(x, x, params), zeta)
    alpha = cho_solve((factor, True), y)
    return float(
        -0.5 * y @ alpha
        - np.sum(np.log(np.diag(factor)))
        - 0.5 * y.shape[0] * math.log(2.0 * math.pi)
    )


def fit_lengthscale(
    inputs: Sequence[MixingRatio],
    targets: Sequence[float],
    zeta: float,
    grid: Sequence[float],
    signal_variance: float = 1.0,
) -> KernelParams:
    """
    Picks the grid lengthscale with the highest log marginal likelihood.

    Ties go to the smaller lengthscale.
    """
    if len(inputs) < 2:
        raise InsufficientData(f"need at least 2 observations to fit, got {len(inputs)}")
    if not grid:
        raise InsufficientData("lengthscale grid is empty")
    best: Optional[KernelParams] = None
    best_ll = -math.inf
    for lengthscale in sorted(float(g) for g in grid):
        params = KernelParams(lengthscale=lengthscale, signal_variance=signal_variance)
        ll = log_marginal_likelihood(inputs, targets, zeta, params)
        if best is None or ll > best_ll:
            best, best_ll = params, ll
    return best


def refit(state: GPState, grid: Sequence[float]) -> GPState:
    """Refits the lengthscale on the state's (standardized) targets."""
    y = (state.targets - state.y_mean) / state.y_scale
    kernel = fit_lengthscale(state.inputs, y.tolist(), state.zeta, grid,
                             signal_variance=state.kernel.signal_variance)
    return with_kernel(state, kernel)


def with_kernel(state: GPState, kernel: KernelParams) -> GPState:
    return build_gp_state(state.n_domains, state.inputs, state.targets.tolist(),
                          kernel=kernel, zeta=state.zeta, standardize=state.standardize)


def append_observation(state: GPState, obs: Observation) -> GPState:
    """Returns a new state with one more row; `state` itself is left untouched."""
    if obs.ratio.n_domains != state.n_domains:
        raise DimensionMismatch(
            f"observation has {obs.ratio.n_domains} domains, surrogate has {state.n_domains}"
        )
    return build_gp_state(
        state.n_domains,
        list(state.inputs) + [obs.ratio],
        state.targets.tolist() + [obs.loss],
        kernel=state.kernel,
        zeta=state.zeta,
        standardize=state.standardize,
    )


def state_from_history(n_domains: int, history: Sequence[Observation], kernel: KernelParams,
                       zeta: float, standardize: bool = True) -> GPState:
    return build_gp_state(n_domains, [o.ratio for o in history], [o.loss for o in history],
                          kernel=kernel, zeta=zeta, standardize=standardize)


def to_checkpoint(state: GPState) -> dict:
    return {
        "n_domains": state.n_domains,
        "inputs": [list(r.weights) for r in state.inputs],
        "targets": state.targets.tolist(),
        "kernel": state.kernel.model_dump(),
        "zeta": state.zeta,
        "standardize": state.standardize,
    }


def from_checkpoint(payload: dict) -> GPState:
    """Rebuilds a state from its checkpoint; the factor is recomputed."""
    return build_gp_state(
        int(payload["n_domains"]),
        [MixingRatio(weights=tuple(w)) for w in payload["inputs"]],
        payload["targets"],
        kernel=KernelParams(**payload["kernel"]),
        zeta=float(payload["zeta"]),
        standardize=bool(payload["standardize"]),
    )
