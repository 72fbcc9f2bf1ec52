"""
State definition for the data-mixture optimizer.

This module defines the immutable domain records shared by every module and the
RunState TypedDict that flows through the LangGraph.
"""

import hashlib
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import (
    ConfigInvalid,
    DimensionMismatch,
    DuplicatePointId,
    EmptyDomain,
    NegativeWeight,
    NonFiniteInfluence,
    RatioDrift,
    ZeroSum,
)

NEGATIVE_TOLERANCE = 1e-12
# Drift a directly constructed ratio may carry before it is an error.
RATIO_DRIFT_TOLERANCE = 1e-6
# Below this the weights are taken as already normalised (keeps normalisation idempotent).
EXACT_SUM_TOLERANCE = 1e-14


def _normalise(weights: Sequence[float], max_drift: Optional[float]) -> Tuple[float, ...]:
    w = np.asarray(list(weights), dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise DimensionMismatch("mixing ratio needs at least one weight")
    if not np.all(np.isfinite(w)):
        raise ZeroSum("mixing ratio weights must be finite")
    if np.any(w < -NEGATIVE_TOLERANCE):
        raise NegativeWeight(f"negative weight in {w.tolist()}")
    w = np.clip(w, 0.0, None)
    total = math.fsum(w.tolist())
    if total <= 0.0:
        raise ZeroSum("mixing ratio weights sum to zero")
    if max_drift is not None and abs(total - 1.0) > max_drift:
        raise RatioDrift(f"weights sum to {total!r}, expected 1 within {max_drift}")
    if abs(total - 1.0) > EXACT_SUM_TOLERANCE:
        w = w / total
    return tuple(float(x) for x in w)


class MixingRatio(BaseModel):
    """Point on the probability simplex: fraction of the mixture per domain."""

    model_config = ConfigDict(frozen=True)

    weights: Tuple[float, ...]

    @field_validator("weights", mode="before")
    @classmethod
    def _on_simplex(cls, value: Any) -> Tuple[float, ...]:
        return _normalise(value, max_drift=RATIO_DRIFT_TOLERANCE)

    @classmethod
    def uniform(cls, n: int) -> "MixingRatio":
        return cls(weights=tuple([1.0 / n] * n))

    @property
    def n_domains(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


def validate_ratio(weights: Sequence[float], n_domains: Optional[int] = None) -> MixingRatio:
    """
    Normalises arbitrary non-negative weights onto the simplex.

    Args:
        weights: Raw weights (any positive sum)
        n_domains: Expected dimension, checked when given

    Returns:
        MixingRatio with weights summing to 1
    """
    normalised = _normalise(weights, max_drift=None)
    if n_domains is not None and len(normalised) != n_domains:
        raise DimensionMismatch(f"expected {n_domains} weights, got {len(normalised)}")
    return MixingRatio(weights=normalised)


def largest_remainder_counts(ratio: MixingRatio, total: int) -> List[int]:
    """Apportions `total` items by ratio; equal remainders go to the lower domain index."""
    quotas = [w * total for w in ratio.weights]
    counts = [int(math.floor(q)) for q in quotas]
    leftover = total - sum(counts)
    remainders = [round(q - c, 12) for q, c in zip(quotas, counts)]
    order = sorted(range(len(quotas)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


class DataPoint(BaseModel):
    """One training point: opaque id, signed influence value, optional payload handle."""

    model_config = ConfigDict(frozen=True)

    point_id: str
    influence: float
    payload_ref: Optional[str] = None


class DomainDataset(BaseModel):
    """A named training-data domain with per-point influence values."""

    model_config = ConfigDict(frozen=True)

    name: str
    points: Tuple[DataPoint, ...]

    @model_validator(mode="after")
    def _check_points(self) -> "DomainDataset":
        if not self.points:
            raise EmptyDomain(f"domain '{self.name}' has no points")
        seen = set()
        for point in self.points:
            if point.point_id in seen:
                raise DuplicatePointId(f"domain '{self.name}': duplicate point_id '{point.point_id}'")
            seen.add(point.point_id)
            if not math.isfinite(point.influence):
                raise NonFiniteInfluence(
                    f"domain '{self.name}': point '{point.point_id}' has influence {point.influence}"
                )
        return self

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def point_ids(self) -> Tuple[str, ...]:
        return tuple(p.point_id for p in self.points)

    def influences(self) -> np.ndarray:
        return np.asarray([p.influence for p in self.points], dtype=float)


class MixtureManifest(BaseModel):
    """A concrete data mixture: point ids per domain realising a target ratio."""

    model_config = ConfigDict(frozen=True)

    selections: Dict[str, Tuple[str, ...]]
    target_ratio: MixingRatio
    total_size: int = Field(gt=0)
    with_replacement: bool = False

    @model_validator(mode="after")
    def _check_counts(self) -> "MixtureManifest":
        if len(self.selections) != self.target_ratio.n_domains:
            raise DimensionMismatch(
                f"{len(self.selections)} domains selected for a "
                f"{self.target_ratio.n_domains}-domain ratio"
            )
        counts = [len(ids) for ids in self.selections.values()]
        if sum(counts) != self.total_size:
            raise ConfigInvalid(f"manifest holds {sum(counts)} points, expected {self.total_size}")
        expected = largest_remainder_counts(self.target_ratio, self.total_size)
        if counts != expected:
            raise ConfigInvalid(f"per-domain counts {counts} do not apportion the ratio ({expected})")
        if not self.with_replacement:
            for name, ids in self.selections.items():
                if len(set(ids)) != len(ids):
                    raise DuplicatePointId(f"domain '{name}' repeats a point without replacement")
        return self

    @property
    def digest(self) -> str:
        return manifest_digest(self)

    def check_against(self, domains: Sequence[DomainDataset]) -> None:
        """Raises if a selected id does not exist in its domain."""
        by_name = {d.name: set(d.point_ids) for d in domains}
        for name, ids in self.selections.items():
            known = by_name.get(name)
            if known is None:
                raise DimensionMismatch(f"manifest references unknown domain '{name}'")
            missing = [pid for pid in ids if pid not in known]
            if missing:
                raise ConfigInvalid(f"domain '{name}' has no point(s) {missing[:5]}")


def manifest_digest(manifest: MixtureManifest) -> str:
    """Stable content hash over the sorted (domain, point_id) pairs."""
    pairs = sorted((name, pid) for name, ids in manifest.selections.items() for pid in ids)
    h = hashlib.sha256()
    for name, pid in pairs:
        h.update(name.encode("utf-8"))
        h.update(b"\x1f")
        h.update(pid.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


def ratio_of(manifest: MixtureManifest) -> MixingRatio:
    counts = [len(ids) for ids in manifest.selections.values()]
    return MixingRatio(weights=tuple(c / manifest.total_size for c in counts))


class Observation(BaseModel):
    """A (ratio, estimated loss) pair appended to the BO history."""

    model_config = ConfigDict(frozen=True)

    ratio: MixingRatio
    loss: float
    iteration: int = Field(ge=0)
    manifest_digest: str
    sample_losses: Tuple[float, ...] = ()
    sample_digests: Tuple[str, ...] = ()

    @field_validator("loss")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("observation loss must be finite")
        return value


class EstimatorKind(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    IF_DRIVEN = "if_driven"
    REMOVE_HARMFUL = "remove_harmful"
    TOP_INFLUENCE = "top_influence"


class RunConfig(BaseModel):
    """Everything that determines a run besides the domains and the evaluator."""

    model_config = ConfigDict(frozen=True)

    n_domains: int = Field(gt=0)
    mixture_size: int = Field(gt=0)
    sampling_size: int = Field(default=1, ge=1)
    iterations: int = Field(default=10, ge=0)
    beta: float = Field(default=0.5, gt=0)
    zeta: float = Field(default=0.01, gt=0)
    seed: int = Field(default=0, ge=-(2**63), lt=2**64)
    estimator_kind: EstimatorKind = EstimatorKind.IF_DRIVEN
    maximize: bool = False

    with_replacement: bool = False
    shift_epsilon: Optional[float] = Field(default=None, gt=0)
    harmful_fraction: float = Field(default=0.2, ge=0, lt=1)
    lengthscale_grid_size: int = Field(default=25, ge=1)
    lengthscale_bounds: Tuple[float, float] = (1e-2, 1e1)
    default_lengthscale: float = 1.0
    n_candidates: int = Field(default=4096, gt=0)
    n_refine_steps: int = Field(default=50, ge=0)
    refine_step_size: float = Field(default=0.05, gt=0)
    max_workers: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def _check_sizes(self) -> "RunConfig":
        if self.mixture_size < self.n_domains:
            raise ConfigInvalid(
                f"mixture_size {self.mixture_size} is smaller than n_domains {self.n_domains}"
            )
        low, high = self.lengthscale_bounds
        if not 0 < low <= high:
            raise ConfigInvalid(f"invalid lengthscale bounds {self.lengthscale_bounds}")
        return self

    def lengthscale_grid(self) -> List[float]:
        low, high = self.lengthscale_bounds
        return [float(x) for x in np.logspace(np.log10(low), np.log10(high), self.lengthscale_grid_size)]


class BestMixture(BaseModel):
    """Best data mixture seen so far (internal minimisation convention)."""

    model_config = ConfigDict(frozen=True)

    loss: float
    manifest: MixtureManifest
    iteration: int


class RunState(TypedDict):
    """
    State object that flows through the LangGraph.

    Fields:
        config: Run configuration
        domains: Training data domains, in ratio order
        evaluator: Evaluator standing in for fine-tune-and-deploy
        gp: Surrogate over every observation in history
        history: Observations so far, initial uniform one included
        best: Best mixture over history
        rng_root_seed: Root of every derived random stream
        iteration: Index of the next BO iteration (1-based; 0 is the initial observation)
        run_dir: Run directory to persist to (None keeps the run in memory)
        _proposal: Ratio proposed by the acquisition step
        _estimate: Inner estimate at the proposed ratio
        _weights: Per-domain selection weights, computed once per run
    """
    config: RunConfig
    domains: List[DomainDataset]
    evaluator: Any
    gp: Any  # surrogate.gp.GPState
    history: Tuple[Observation, ...]
    best: Optional[BestMixture]
    rng_root_seed: int
    iteration: int
    run_dir: Optional[str]
    _proposal: Optional[MixingRatio]
    _estimate: Optional[Any]  # tools.estimator.EstimateResult
    _weights: Optional[List[Any]]  # tools.influence.NormalizedWeights
