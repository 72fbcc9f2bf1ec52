"""
Influence values: loading, normalising to sampling probabilities, weighted
sampling of a domain, and an exact ridge-regression influence oracle.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.linalg import LinAlgError, solve

from errors import (
    CountExceedsDomain,
    DimensionMismatch,
    DomainError,
    EmptyDomain,
    NonFiniteInfluence,
    SingularHessian,
)
from graph.state import DataPoint, DomainDataset
from tools.seeding import SeedLike, as_generator

logger = logging.getLogger(__name__)

CSV_HEADER = ["point_id", "influence", "payload_ref"]


class NormalizedWeights(BaseModel):
    """Sampling probabilities aligned with `point_ids`."""

    model_config = ConfigDict(frozen=True)

    domain: str
    point_ids: Tuple[str, ...]
    probs: Tuple[float, ...]
    shift_epsilon: Optional[float] = None  # None for weights not derived from influences

    @model_validator(mode="after")
    def _check_probs(self) -> "NormalizedWeights":
        if len(self.probs) != len(self.point_ids):
            raise DimensionMismatch(f"{len(self.probs)} probabilities for {len(self.point_ids)} points")
        if not self.probs:
            raise EmptyDomain(f"domain '{self.domain}' has no points to sample")
        if min(self.probs) <= 0.0:
            raise DomainError(f"domain '{self.domain}': sampling probabilities must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise DomainError(f"domain '{self.domain}': probabilities sum to {math.fsum(self.probs)}")
        return self

    @property
    def size(self) -> int:
        return len(self.point_ids)


def default_shift_epsilon(influences: np.ndarray) -> float:
    return 1e-6 * (float(np.max(influences) - np.min(influences)) + 1.0)


def normalize_weights(domain: DomainDataset, shift_epsilon: Optional[float] = None) -> NormalizedWeights:
    """
    Turns influence values into sampling probabilities.

    probs_i = (I_i - min(I) + eps) / sum_j (I_j - min(I) + eps), so higher
    influence means a higher chance of being drawn and every point keeps a
    non-zero chance.

    Args:
        domain: Domain with per-point influence values
        shift_epsilon: Floor added after the min-shift (relative default when None)

    Returns:
        NormalizedWeights for the domain
    """
    influences = domain.influences()
    if influences.size == 0:
        raise EmptyDomain(f"domain '{domain.name}' has no points")
    if not np.all(np.isfinite(influences)):
        raise NonFiniteInfluence(f"domain '{domain.name}' has non-finite influence values")
    eps = default_shift_epsilon(influences) if shift_epsilon is None else float(shift_epsilon)
    if eps <= 0:
        raise DomainError(f"shift_epsilon must be positive, got {eps}")
    shifted = influences - influences.min() + eps
    probs = shifted / shifted.sum()
    return NormalizedWeights(
        domain=domain.name,
        point_ids=domain.point_ids,
        probs=tuple(float(p) for p in probs),
        shift_epsilon=eps,
    )


def uniform_weights(domain: DomainDataset, keep: Optional[List[str]] = None) -> NormalizedWeights:
    ids = tuple(keep) if keep is not None else domain.point_ids
    return NormalizedWeights(domain=domain.name, point_ids=ids, probs=tuple([1.0 / len(ids)] * len(ids)))


def sample_domain(
    weights: NormalizedWeights,
    count: int,
    with_replacement: bool = False,
    rng_seed: SeedLike = 0,
) -> List[str]:
    """
    Draws `count` point ids by weighted sampling.

    Without replacement every draw removes the drawn point and renormalises the
    rest (numpy's weighted choice without replacement has exactly these
    successive-draw semantics).

    Args:
        weights: Sampling probabilities for one domain
        count: Number of ids to draw
        with_replacement: Allow the same id more than once
        rng_seed: Seed or generator

    Returns:
        List of drawn point ids
    """
    if count < 0:
        raise DomainError(f"cannot draw a negative number of points ({count})")
    if count == 0:
        return []
    if not with_replacement and count > weights.size:
        raise CountExceedsDomain(weights.domain, count, weights.size)
    rng = as_generator(rng_seed)
    p = np.asarray(weights.probs, dtype=float)
    idx = rng.choice(weights.size, size=count, replace=with_replacement, p=p / p.sum())
    return [weights.point_ids[i] for i in idx]


def load_influence_csv(path: Union[str, Path], name: Optional[str] = None) -> DomainDataset:
    """
    Loads one domain from a `point_id,influence[,payload_ref]` CSV.

    Args:
        path: CSV file (UTF-8)
        name: Domain name (defaults to the file stem)

    Returns:
        DomainDataset
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"influence file not found: {path}")
    points: List[DataPoint] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"point_id", "influence"} <= set(reader.fieldnames):
            raise DimensionMismatch(f"{path}: header must start with point_id,influence")
        for line_no, row in enumerate(reader, start=2):
            value = float(row["influence"])
            if not math.isfinite(value):
                raise NonFiniteInfluence(f"{path}:{line_no}: influence {row['influence']!r}")
            points.append(
                DataPoint(point_id=row["point_id"], influence=value, payload_ref=row.get("payload_ref") or None)
            )
    domain = DomainDataset(name=name or path.stem, points=tuple(points))
    logger.info("Loaded domain '%s' with %d points from %s", domain.name, domain.size, path)
    return domain


def write_influence_csv(domain: DomainDataset, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for p in domain.points:
            writer.writerow([p.point_id, repr(p.influence), p.payload_ref or ""])


@dataclass(frozen=True, eq=False)
class RidgeProblem:
    """Ridge regression with squared-error loss; used to validate the influence formula."""
    features: np.ndarray
    labels: np.ndarray
    reg_lambda: float
    test_features: np.ndarray
    test_labels: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch("training features and labels differ in length")
        if self.test_features.shape[0] != self.test_labels.shape[0]:
            raise DimensionMismatch("test features and labels differ in length")
        if self.test_features.shape[1] != self.features.shape[1]:
            raise DimensionMismatch("training and test features differ in width")
        if self.reg_lambda <= 0:
            raise DomainError("reg_lambda must be positive")


def _hessian(features: np.ndarray, reg_lambda: float) -> np.ndarray:
    return features.T @ features + reg_lambda * np.eye(features.shape[1])


def ridge_fit(features: np.ndarray, labels: np.ndarray, reg_lambda: float) -> np.ndarray:
    return solve(_hessian(features, reg_lambda), features.T @ labels, assume_a="pos")


def ridge_test_loss(problem: RidgeProblem, theta: np.ndarray) -> float:
    residual = problem.test_features @ theta - problem.test_labels
    return float(0.5 * np.mean(residual ** 2))


def ridge_influences(problem: RidgeProblem) -> np.ndarray:
    """
    Exact influence of each training point on the mean test loss.

    Values are grad L(test)^T H^-1 grad L(z_i) at the ridge solution, i.e. the
    first-order increase in test loss if z_i were removed: positive values mark
    helpful points, negative values harmful ones.
    """
    x, y = problem.features, problem.labels
    hessian = _hessian(x, problem.reg_lambda)
    try:
        theta = solve(hessian, x.T @ y, assume_a="pos")
        test_residual = problem.test_features @ theta - problem.test_labels
        test_grad = problem.test_features.T @ test_residual / problem.test_labels.shape[0]
        h_inv_test = solve(hessian, test_grad, assume_a="pos")
    except LinAlgError as e:
        raise SingularHessian(f"ridge Hessian is singular: {e}") from e
    train_grads = (x @ theta - y)[:, None] * x
    return train_grads @ h_inv_test


def leave_one_out_deltas(problem: RidgeProblem) -> np.ndarray:
    """Test-loss change L(without z_i) - L(all) by retraining once per point."""
    base = ridge_test_loss(problem, ridge_fit(problem.features, problem.labels, problem.reg_lambda))
    n = problem.features.shape[0]
    deltas = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        theta = ridge_fit(problem.features[mask], problem.labels[mask], problem.reg_lambda)
        deltas[i] = ridge_test_loss(problem, theta) - base
        mask[i] = True
    return deltas
