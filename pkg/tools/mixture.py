"""
Mixture construction: apportion M points across domains by ratio and draw each
domain's share with the selection weights of the configured estimator.
"""

import logging
from typing import Dict, List, Sequence

from errors import CountExceedsDomain, DimensionMismatch
from graph.state import (
    DomainDataset,
    EstimatorKind,
    MixingRatio,
    MixtureManifest,
    RunConfig,
    largest_remainder_counts,
)
from tools.influence import NormalizedWeights, normalize_weights, sample_domain, uniform_weights
from tools.seeding import derive_seed

logger = logging.getLogger(__name__)


def retained_after_harmful_removal(domain: DomainDataset, fraction: float = 0.2) -> List[str]:
    """
    Drops floor(fraction * |D|) lowest-influence points.

    At the cutoff, ties keep the lexicographically smaller point_id.
    """
    n_drop = int(fraction * domain.size)
    by_id_desc = sorted(domain.points, key=lambda p: p.point_id, reverse=True)
    ranked = sorted(by_id_desc, key=lambda p: p.influence)  # stable: larger ids go first among ties
    dropped = {p.point_id for p in ranked[:n_drop]}
    return [p.point_id for p in domain.points if p.point_id not in dropped]


def selection_weights(domain: DomainDataset, kind: EstimatorKind, config: RunConfig) -> NormalizedWeights:
    """Per-domain sampling weights for an estimator kind (computed once per run)."""
    if kind == EstimatorKind.IF_DRIVEN:
        return normalize_weights(domain, config.shift_epsilon)
    if kind == EstimatorKind.REMOVE_HARMFUL:
        return uniform_weights(domain, keep=retained_after_harmful_removal(domain, config.harmful_fraction))
    if kind == EstimatorKind.TOP_INFLUENCE:
        # draws are deterministic; the weights only carry the ranking
        return normalize_weights(domain, config.shift_epsilon)
    return uniform_weights(domain)


def weights_for_domains(domains: Sequence[DomainDataset], kind: EstimatorKind,
                        config: RunConfig) -> List[NormalizedWeights]:
    return [selection_weights(d, kind, config) for d in domains]


def _top_influence(domain: DomainDataset, count: int) -> List[str]:
    if count > domain.size:
        raise CountExceedsDomain(domain.name, count, domain.size)
    ranked = sorted(domain.points, key=lambda p: (-p.influence, p.point_id))
    return [p.point_id for p in ranked[:count]]


def build_manifest(
    ratio: MixingRatio,
    total_size: int,
    domains: Sequence[DomainDataset],
    weights_per_domain: Sequence[NormalizedWeights],
    estimator_kind: EstimatorKind,
    seed: int,
    with_replacement: bool = False,
) -> MixtureManifest:
    """
    Builds a concrete mixture realising `ratio` with `total_size` points.

    Args:
        ratio: Target mixing ratio (domain order matches `domains`)
        total_size: M, total number of points
        domains: Training domains
        weights_per_domain: Selection weights aligned with `domains`
        estimator_kind: How points are picked inside a domain
        seed: Seed for this mixture; each domain draws from its own derived stream
        with_replacement: Allow repeated points within a domain

    Returns:
        MixtureManifest with largest-remainder per-domain counts
    """
    if ratio.n_domains != len(domains) or len(weights_per_domain) != len(domains):
        raise DimensionMismatch(
            f"ratio has {ratio.n_domains} domains, {len(domains)} domains and "
            f"{len(weights_per_domain)} weight sets given"
        )
    counts = largest_remainder_counts(ratio, total_size)
    selections: Dict[str, tuple] = {}
    for index, (domain, weights, count) in enumerate(zip(domains, weights_per_domain, counts)):
        if estimator_kind == EstimatorKind.TOP_INFLUENCE:
            ids = _top_influence(domain, count)
        else:
            if not with_replacement and count > weights.size:
                raise CountExceedsDomain(domain.name, count, weights.size)
            ids = sample_domain(weights, count, with_replacement, derive_seed(seed, index))
        selections[domain.name] = tuple(ids)
    return MixtureManifest(
        selections=selections,
        target_ratio=ratio,
        total_size=total_size,
        with_replacement=with_replacement,
    )
