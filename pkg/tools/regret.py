"""
Attained regret of completed runs and the closed-form average-regret bound.
"""

import csv
import math
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import BaseModel, ConfigDict

from errors import DomainError, UnknownOptimum
from graph.state import Observation


class RegretTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    losses: List[float]
    per_step: List[float]
    cumulative: List[float]
    average: List[float]
    f_star: float


def compute_trace(history: Sequence[Observation], f_star: Optional[float]) -> RegretTrace:
    """
    Per-step |loss_t - f*|, prefix sums and running averages.

    Raises:
        UnknownOptimum: when f* is not known (e.g. external evaluators)
    """
    if f_star is None:
        raise UnknownOptimum("regret needs the true optimum; only synthetic tasks expose it")
    losses = [o.loss for o in history]
    per_step = [abs(loss - f_star) for loss in losses]
    cumulative: List[float] = []
    running = 0.0
    for value in per_step:
        running += value
        cumulative.append(running)
    average = [c / (t + 1) for t, c in enumerate(cumulative)]
    return RegretTrace(losses=losses, per_step=per_step, cumulative=cumulative, average=average, f_star=f_star)


def _check_noise_domain(c: float, k: int) -> None:
    if not 0.0 < c <= 1.0:
        raise DomainError(f"noise cutoff c must lie in (0, 1], got {c}")
    if k < 1:
        raise DomainError(f"sampling size k must be >= 1, got {k}")


def bound_constant(c: float, k: int) -> float:
    """A_{c,k} = c^2 (1 - e^-c - c/2)^(k-1) / (1 - e^-c)^k."""
    _check_noise_domain(c, k)
    one_minus = -math.expm1(-c)
    return c * c * (one_minus - c / 2.0) ** (k - 1) / one_minus ** k


def average_regret_bound(c: float, k: int, delta: float) -> float:
    """Limit of R_T / T: 6(d + sqrt k)/(d k) + 2A + sqrt(2A)/d with d = delta^(1/4)."""
    _check_noise_domain(c, k)
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    a = bound_constant(c, k)
    d = delta ** 0.25
    return 6.0 * (d + math.sqrt(k)) / (d * k) + 2.0 * a + math.sqrt(2.0 * a) / d


def write_trace_csv(trace: RegretTrace, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "loss", "per_step", "cumulative", "average"])
        for t, row in enumerate(zip(trace.losses, trace.per_step, trace.cumulative, trace.average), start=1):
            writer.writerow([t, *(repr(v) for v in row)])
