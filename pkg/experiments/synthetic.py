"""
Synthetic domains and ridge problems for validation and ablation runs.
"""

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from graph.state import DataPoint, DomainDataset, MixingRatio
from tools.evaluators import SyntheticTask
from tools.influence import RidgeProblem
from tools.order_stats import TruncExpParams
from tools.seeding import SeedLike, as_generator


class SyntheticDomainSpec(BaseModel):
    """Generated domain: mostly helpful points with a share of harmful ones."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(gt=0)
    seed: int = 0
    harmful_share: float = Field(default=0.2, ge=0, lt=1)


def synthetic_domain(name: str, spec: SyntheticDomainSpec) -> DomainDataset:
    """
    Influence values are N(1, 0.5) for helpful and N(-1, 0.5) for harmful
    points, in shuffled order.
    """
    rng = as_generator(spec.seed)
    n_harmful = int(round(spec.harmful_share * spec.size))
    values = np.concatenate([
        rng.normal(1.0, 0.5, spec.size - n_harmful),
        rng.normal(-1.0, 0.5, n_harmful),
    ])
    rng.shuffle(values)
    points = tuple(
        DataPoint(point_id=f"{name}-{i:05d}", influence=float(v)) for i, v in enumerate(values)
    )
    return DomainDataset(name=name, points=points)


def synthetic_domains(n_domains: int, size: int, seed: int = 0,
                      harmful_share: float = 0.2) -> List[DomainDataset]:
    return [
        synthetic_domain(f"d{j}", SyntheticDomainSpec(size=size, seed=seed * 1000 + j,
                                                      harmful_share=harmful_share))
        for j in range(n_domains)
    ]


def ridge_problem(n: int = 200, d: int = 5, seed: SeedLike = 0, reg_lambda: float = 1.0,
                  n_test: int = 100, test_shift: float = 0.3, corrupted_share: float = 0.1,
                  noise: float = 0.1) -> RidgeProblem:
    """
    Ridge regression whose test distribution is a shifted copy of the training
    one, with a share of training labels corrupted so some points are harmful.
    """
    rng = as_generator(seed)
    theta = rng.normal(size=d)
    x = rng.normal(size=(n, d))
    y = x @ theta + noise * rng.normal(size=n)
    n_bad = int(round(corrupted_share * n))
    if n_bad:
        bad = rng.choice(n, size=n_bad, replace=False)
        y[bad] = -y[bad] + rng.normal(scale=1.0, size=n_bad)
    test_theta = theta + test_shift * rng.normal(size=d)
    x_test = rng.normal(size=(n_test, d))
    y_test = x_test @ test_theta + noise * rng.normal(size=n_test)
    return RidgeProblem(features=x, labels=y, reg_lambda=reg_lambda,
                        test_features=x_test, test_labels=y_test)


def quadratic_task(optimum: Sequence[float], quality_sensitivity: float = 0.0,
                   noise_cutoff: Optional[float] = None, base_loss: float = 0.0,
                   curvature: float = 1.0) -> SyntheticTask:
    noise = TruncExpParams(rate=1.0, cutoff=noise_cutoff) if noise_cutoff is not None else None
    return SyntheticTask(
        optimum_ratio=MixingRatio(weights=tuple(optimum)),
        base_loss=base_loss,
        curvature=curvature,
        noise=noise,
        quality_sensitivity=quality_sensitivity,
    )
