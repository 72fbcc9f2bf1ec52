"""
Evaluators: the black box that stands in for "fine-tune on this mixture, deploy,
and observe feedback".

Synthetic tasks give analytic losses with a known optimum; table lookup replays
recorded losses; the external-process bridge lives in tools/external.py.
"""

import csv
import logging
import math
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ConfigInvalid, MixOptError, EvaluatorFailure, NonFiniteLoss
from graph.state import DomainDataset, MixingRatio, MixtureManifest, ratio_of
from tools.order_stats import TruncExpParams, sample_truncexp
from tools.seeding import NOISE, derive_rng

logger = logging.getLogger(__name__)


class EvaluatorKind(str, Enum):
    SYNTHETIC_QUADRATIC = "synthetic_quadratic"
    SYNTHETIC_TRUNCEXP = "synthetic_truncexp"
    TABLE_LOOKUP = "table_lookup"
    EXTERNAL_PROCESS = "external_process"


class EvaluatorHandle(BaseModel):
    """Serializable description of an evaluator; `build_evaluator` turns it into a callable."""

    model_config = ConfigDict(frozen=True)

    kind: EvaluatorKind
    params: Dict[str, Any] = Field(default_factory=dict)
    supports_concurrency: Optional[bool] = None


class SyntheticTask(BaseModel):
    """
    Analytic stand-in for an unseen task.

    loss = base_loss + curvature * ||ratio - optimum||^2
           + quality_sensitivity * (1 - mean normalized influence of the mixture)
           + truncated-exponential noise
    """

    model_config = ConfigDict(frozen=True)

    optimum_ratio: MixingRatio
    base_loss: float = 0.0
    curvature: float = Field(default=1.0, gt=0)
    noise: Optional[TruncExpParams] = None
    quality_sensitivity: float = Field(default=0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _bounded_noise(self) -> "SyntheticTask":
        if self.noise is not None and self.noise.cutoff > 1.0:
            raise ConfigInvalid(f"synthetic noise cutoff must be <= 1, got {self.noise.cutoff}")
        return self

    @property
    def f_star(self) -> float:
        return self.base_loss


class Evaluator(ABC):
    """Stateless across calls: every call trains "from the same initial checkpoint"."""

    supports_concurrency: bool = True
    f_star: Optional[float] = None
    # True when f_star is the largest feedback rather than the smallest loss
    f_star_is_maximum: bool = False

    @abstractmethod
    def __call__(self, manifest: MixtureManifest, iteration: int, sample_index: int, seed: int) -> float:
        ...

    def close(self) -> None:
        pass


def normalized_influence_table(domains: Sequence[DomainDataset]) -> Dict[str, Dict[str, float]]:
    """Per-domain min-max scaled influence in [0, 1] (0.5 when a domain is flat)."""
    table: Dict[str, Dict[str, float]] = {}
    for domain in domains:
        values = domain.influences()
        spread = float(values.max() - values.min())
        scaled = (values - values.min()) / spread if spread > 0 else np.full(values.shape, 0.5)
        table[domain.name] = dict(zip(domain.point_ids, scaled.tolist()))
    return table


class SyntheticEvaluator(Evaluator):
    def __init__(self, task: SyntheticTask, domains: Sequence[DomainDataset], require_noise: bool = False):
        if require_noise and task.noise is None:
            raise ConfigInvalid("synthetic_truncexp evaluator needs a noise law")
        self.task = task
        self.f_star = task.f_star
        self.supports_concurrency = True
        self._quality = normalized_influence_table(domains) if task.quality_sensitivity > 0 else {}

    def mean_quality(self, manifest: MixtureManifest) -> float:
        values = [self._quality[name][pid] for name, ids in manifest.selections.items() for pid in ids]
        return float(np.mean(values)) if values else 0.0

    def noiseless_loss(self, manifest: MixtureManifest) -> float:
        task = self.task
        diff = ratio_of(manifest).as_array() - task.optimum_ratio.as_array()
        loss = task.base_loss + task.curvature * float(diff @ diff)
        if task.quality_sensitivity > 0:
            loss += task.quality_sensitivity * (1.0 - self.mean_quality(manifest))
        return loss

    def __call__(self, manifest: MixtureManifest, iteration: int, sample_index: int, seed: int) -> float:
        loss = self.noiseless_loss(manifest)
        noise = self.task.noise
        if noise is not None:
            rng = derive_rng(seed, NOISE, iteration, sample_index)
            loss += float(sample_truncexp(noise.rate, noise.cutoff, 1, rng)[0])
        return loss


class TableLookupEvaluator(Evaluator):
    """Serves preloaded losses keyed by manifest digest (optionally per iteration/sample)."""

    def __init__(self, by_digest: Dict[str, float],
                 by_position: Optional[Dict[Tuple[str, int, int], float]] = None):
        self.supports_concurrency = True
        self._by_digest = dict(by_digest)
        self._by_position = dict(by_position or {})

    @classmethod
    def from_csv(cls, path: Path) -> "TableLookupEvaluator":
        by_digest: Dict[str, float] = {}
        by_position: Dict[Tuple[str, int, int], float] = {}
        with open(path, "r", encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f):
                loss = float(row["loss"])
                by_digest[row["digest"]] = loss
                if row.get("iteration") not in (None, "") and row.get("sample_index") not in (None, ""):
                    by_position[(row["digest"], int(row["iteration"]), int(row["sample_index"]))] = loss
        logger.info("Loaded %d recorded losses from %s", len(by_digest), path)
        return cls(by_digest, by_position)

    def __call__(self, manifest: MixtureManifest, iteration: int, sample_index: int, seed: int) -> float:
        digest = manifest.digest
        key = (digest, iteration, sample_index)
        if key in self._by_position:
            return self._by_position[key]
        if digest in self._by_digest:
            return self._by_digest[digest]
        raise EvaluatorFailure(f"no recorded loss for manifest {digest[:12]} "
                               f"(iteration {iteration}, sample {sample_index})", sample_index)


def write_loss_table(rows: Sequence[Tuple[str, float, int, int]], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["digest", "loss", "iteration", "sample_index"])
        for digest, loss, iteration, sample_index in rows:
            writer.writerow([digest, repr(loss), iteration, sample_index])


def build_evaluator(handle: EvaluatorHandle, domains: Sequence[DomainDataset],
                    manifest_dir: Optional[Path] = None, base_dir: Optional[Path] = None) -> Evaluator:
    """
    Instantiates the evaluator described by a handle.

    Args:
        handle: Evaluator kind and kind-specific params
        domains: Training domains (synthetic quality term, manifest payload refs)
        manifest_dir: Where the external bridge writes manifest files
        base_dir: Directory relative paths in params are resolved against

    Returns:
        Evaluator ready to call
    """
    base_dir = Path(base_dir) if base_dir is not None else Path(".")
    kind = handle.kind
    if kind in (EvaluatorKind.SYNTHETIC_QUADRATIC, EvaluatorKind.SYNTHETIC_TRUNCEXP):
        task = SyntheticTask(**handle.params)
        evaluator: Evaluator = SyntheticEvaluator(
            task, domains, require_noise=kind == EvaluatorKind.SYNTHETIC_TRUNCEXP
        )
    elif kind == EvaluatorKind.TABLE_LOOKUP:
        path = Path(handle.params["path"])
        evaluator = TableLookupEvaluator.from_csv(path if path.is_absolute() else base_dir / path)
    elif kind == EvaluatorKind.EXTERNAL_PROCESS:
        from tools.external import ExternalProcessEvaluator

        evaluator = ExternalProcessEvaluator.from_params(handle.params, domains, manifest_dir, base_dir)
    else:
        raise ConfigInvalid(f"unknown evaluator kind {kind}")
    if handle.supports_concurrency is not None:
        evaluator.supports_concurrency = handle.supports_concurrency
    return evaluator


def evaluate(evaluator: Evaluator, manifest: MixtureManifest, iteration: int,
             sample_index: int, seed: int) -> float:
    """
    Calls the evaluator once and checks the returned loss.

    Raises:
        EvaluatorFailure (or a subclass) when no finite loss comes back
    """
    try:
        loss = evaluator(manifest, iteration, sample_index, seed)
    except MixOptError:
        raise
    except Exception as e:
        raise EvaluatorFailure(f"evaluator raised {type(e).__name__}: {e}", sample_index) from e
    loss = float(loss)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"evaluator returned {loss} for sample {sample_index}", sample_index)
    return loss
