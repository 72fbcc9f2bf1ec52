"""
Desk-scale ablations: which parts of the optimizer matter, which selection
method, which sampling size, and what the estimator's distribution looks like.

Every ablation takes the domains and evaluator of a normal run config and varies
one thing across seeds; results are written as CSV.
"""

import csv
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from graph.engine import run_to_completion, run_uniform_baseline
from graph.state import DomainDataset, EstimatorKind, MixingRatio, RunConfig
from tools.estimator import estimate_inner
from tools.evaluators import Evaluator
from tools.seeding import VALIDATE, derive_seed

logger = logging.getLogger(__name__)


class Ablation(str, Enum):
    COMPONENTS = "components"
    SELECTION = "selection"
    SAMPLING_SIZE = "sampling_size"
    DISTRIBUTION = "distribution"


class AblationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: str
    seed: int
    best_loss: float


class VariantSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: str
    runs: int
    mean: float
    std: float
    variance: float


def _seeds(config: RunConfig, n_seeds: int) -> List[int]:
    return [config.seed + i for i in range(n_seeds)]


def _best_loss(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator) -> float:
    return run_to_completion(config, domains, evaluator)["best"].loss


def components(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator,
               n_seeds: int = 10, quiet: bool = False) -> List[AblationRow]:
    """
    Static uniform mixture, IF-driven selection alone at the uniform ratio,
    BO with uniform-random selection, and BO with IF-driven selection.
    """
    rows: List[AblationRow] = []
    for seed in tqdm(_seeds(config, n_seeds), desc="components", disable=quiet):
        seeded = config.model_copy(update={"seed": seed})
        rows.append(AblationRow(variant="uniform_baseline", seed=seed,
                                best_loss=run_uniform_baseline(seeded, domains, evaluator).value))
        if_only = seeded.model_copy(update={"estimator_kind": EstimatorKind.IF_DRIVEN, "iterations": 0})
        rows.append(AblationRow(variant="if_only", seed=seed,
                                best_loss=_best_loss(if_only, domains, evaluator)))
        for kind in (EstimatorKind.UNIFORM_RANDOM, EstimatorKind.IF_DRIVEN):
            variant = seeded.model_copy(update={"estimator_kind": kind})
            rows.append(AblationRow(variant=f"bo_{kind.value}", seed=seed,
                                    best_loss=_best_loss(variant, domains, evaluator)))
    return rows


def selection(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator,
              n_seeds: int = 10, quiet: bool = False) -> List[AblationRow]:
    rows: List[AblationRow] = []
    for kind in EstimatorKind:
        for seed in tqdm(_seeds(config, n_seeds), desc=f"selection {kind.value}", disable=quiet):
            variant = config.model_copy(update={"seed": seed, "estimator_kind": kind})
            rows.append(AblationRow(variant=kind.value, seed=seed,
                                    best_loss=_best_loss(variant, domains, evaluator)))
    return rows


def sampling_size(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator,
                  n_seeds: int = 20, ks: Iterable[int] = (1, 2, 4), quiet: bool = False) -> List[AblationRow]:
    rows: List[AblationRow] = []
    for k in ks:
        for seed in tqdm(_seeds(config, n_seeds), desc=f"k={k}", disable=quiet):
            variant = config.model_copy(update={"seed": seed, "sampling_size": k})
            rows.append(AblationRow(variant=f"k={k}", seed=seed,
                                    best_loss=_best_loss(variant, domains, evaluator)))
    return rows


def distribution(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator,
                 n_estimates: int = 1000, ratio: Optional[MixingRatio] = None, quiet: bool = False) -> List[AblationRow]:
    """
    Repeated inner estimates at one fixed ratio (uniform by default) for
    uniform-random and IF-driven selection; `seed` holds the estimate index.
    """
    ratio = ratio or MixingRatio.uniform(config.n_domains)
    rows: List[AblationRow] = []
    for kind in (EstimatorKind.UNIFORM_RANDOM, EstimatorKind.IF_DRIVEN):
        variant = config.model_copy(update={"estimator_kind": kind})
        for i in tqdm(range(n_estimates), desc=f"distribution {kind.value}", disable=quiet):
            # same seeds for both kinds: paired draws
            estimate = estimate_inner(ratio, domains, variant, evaluator,
                                      derive_seed(config.seed, VALIDATE, 8, i), iteration=i)
            rows.append(AblationRow(variant=kind.value, seed=i, best_loss=estimate.value))
    return rows


def summarize(rows: Sequence[AblationRow]) -> List[VariantSummary]:
    """Mean, std and variance of the best loss per variant, in first-seen order."""
    by_variant: Dict[str, List[float]] = {}
    for row in rows:
        by_variant.setdefault(row.variant, []).append(row.best_loss)
    summaries = []
    for variant, losses in by_variant.items():
        values = np.asarray(losses)
        summaries.append(VariantSummary(
            variant=variant,
            runs=len(values),
            mean=float(values.mean()),
            std=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            variance=float(values.var(ddof=1)) if len(values) > 1 else 0.0,
        ))
    return summaries


def wins(rows: Sequence[AblationRow], variant: str, reference: str) -> int:
    """Number of seeds on which `variant` is strictly better than `reference`."""
    left = {r.seed: r.best_loss for r in rows if r.variant == variant}
    right = {r.seed: r.best_loss for r in rows if r.variant == reference}
    return sum(1 for seed, loss in left.items() if seed in right and loss < right[seed])


def write_rows_csv(rows: Sequence[AblationRow], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "seed", "best_loss"])
        for row in rows:
            writer.writerow([row.variant, row.seed, repr(row.best_loss)])


def write_summary_csv(summaries: Sequence[VariantSummary], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "runs", "mean", "std", "variance"])
        for s in summaries:
            writer.writerow([s.variant, s.runs, repr(s.mean), repr(s.std), repr(s.variance)])


def run_ablation(which: Ablation, config: RunConfig, domains: Sequence[DomainDataset],
                 evaluator: Evaluator, output_dir: Path, n_seeds: int = 10,
                 quiet: bool = False) -> List[VariantSummary]:
    """Runs one ablation and writes `<which>_runs.csv` and `<which>_summary.csv`."""
    logger.info("[ABLATE] %s over %d seed(s)", which.value, n_seeds)
    if which == Ablation.COMPONENTS:
        rows = components(config, domains, evaluator, n_seeds, quiet)
    elif which == Ablation.SELECTION:
        rows = selection(config, domains, evaluator, n_seeds, quiet)
    elif which == Ablation.SAMPLING_SIZE:
        rows = sampling_size(config, domains, evaluator, n_seeds, quiet=quiet)
    else:
        rows = distribution(config, domains, evaluator, quiet=quiet)
    summaries = summarize(rows)
    output_dir = Path(output_dir)
    write_rows_csv(rows, output_dir / f"{which.value}_runs.csv")
    write_summary_csv(summaries, output_dir / f"{which.value}_summary.csv")
    for s in summaries:
        logger.info("[ABLATE] %-18s mean %.6f std %.6f (%d runs)", s.variant, s.mean, s.std, s.runs)
    return summaries
