import math

import pytest
from hypothesis import given, strategies as st
from pydantic import ValidationError

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
from graph.state import (
    DataPoint,
    DomainDataset,
    MixingRatio,
    MixtureManifest,
    Observation,
    RunConfig,
    largest_remainder_counts,
    manifest_digest,
    ratio_of,
    validate_ratio,
)
from tests.conftest import make_domain


def test_validate_ratio_normalises():
    assert validate_ratio([2.0, 2.0]).weights == (0.5, 0.5)
    assert validate_ratio([1.0, 0.0]).weights == (1.0, 0.0)


def test_validate_ratio_rejects_bad_weights():
    with pytest.raises(NegativeWeight):
        validate_ratio([0.5, -0.1, 0.6])
    with pytest.raises(ZeroSum):
        validate_ratio([0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        validate_ratio([0.5, 0.5], n_domains=3)


def test_direct_construction_tolerates_small_drift_only():
    r = MixingRatio(weights=(0.5, 0.5 + 5e-7))
    assert math.isclose(sum(r.weights), 1.0, abs_tol=1e-15)
    with pytest.raises(RatioDrift):
        MixingRatio(weights=(0.6, 0.6))


def test_uniform_ratio():
    assert MixingRatio.uniform(4).weights == (0.25, 0.25, 0.25, 0.25)


@given(st.lists(st.floats(min_value=0.0, max_value=1e3, allow_nan=False), min_size=1, max_size=9))
def test_validate_ratio_idempotent(raw):
    if sum(raw) <= 0:
        return
    once = validate_ratio(raw)
    twice = validate_ratio(list(once.weights))
    assert once.weights == twice.weights
    assert abs(math.fsum(once.weights) - 1.0) < 1e-12


def test_largest_remainder_examples():
    assert largest_remainder_counts(MixingRatio(weights=(0.5, 0.5)), 10) == [5, 5]
    assert largest_remainder_counts(MixingRatio.uniform(3), 10) == [4, 3, 3]
    assert largest_remainder_counts(MixingRatio(weights=(1.0, 0.0)), 5) == [5, 0]


@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=1, max_size=8),
    st.integers(min_value=1, max_value=500),
)
def test_largest_remainder_sums_and_stays_near_quota(raw, total):
    if sum(raw) <= 0:
        return
    ratio = validate_ratio(raw)
    counts = largest_remainder_counts(ratio, total)
    assert sum(counts) == total
    for w, c in zip(ratio.weights, counts):
        assert abs(c - w * total) < 1.0 + 1e-9


def test_domain_validation():
    with pytest.raises(EmptyDomain):
        DomainDataset(name="empty", points=())
    with pytest.raises(DuplicatePointId):
        DomainDataset(name="dup", points=(DataPoint(point_id="a", influence=0.0),
                                          DataPoint(point_id="a", influence=1.0)))
    with pytest.raises(NonFiniteInfluence):
        make_domain("nan", [0.0, float("nan")])


def test_manifest_digest_ignores_order():
    ratio = MixingRatio(weights=(0.5, 0.5))
    a = MixtureManifest(selections={"x": ("1", "2"), "y": ("3", "4")}, target_ratio=ratio, total_size=4)
    b = MixtureManifest(selections={"x": ("2", "1"), "y": ("4", "3")}, target_ratio=ratio, total_size=4)
    c = MixtureManifest(selections={"x": ("1", "5"), "y": ("3", "4")}, target_ratio=ratio, total_size=4)
    assert manifest_digest(a) == manifest_digest(b)
    assert a.digest != c.digest


def test_manifest_checks_apportionment():
    ratio = MixingRatio(weights=(0.5, 0.5))
    with pytest.raises(ConfigInvalid):
        MixtureManifest(selections={"x": ("1",), "y": ("3", "4", "5")}, target_ratio=ratio, total_size=4)
    with pytest.raises(DuplicatePointId):
        MixtureManifest(selections={"x": ("1", "1"), "y": ("3", "4")}, target_ratio=ratio, total_size=4)
    repeated = MixtureManifest(selections={"x": ("1", "1"), "y": ("3", "4")}, target_ratio=ratio,
                               total_size=4, with_replacement=True)
    assert ratio_of(repeated).weights == (0.5, 0.5)


def test_manifest_check_against_domains():
    domain_x = make_domain("x", [0.0, 1.0])
    domain_y = make_domain("y", [0.0, 1.0])
    manifest = MixtureManifest(selections={"x": ("x-0",), "y": ("y-9",)},
                               target_ratio=MixingRatio.uniform(2), total_size=2)
    with pytest.raises(ConfigInvalid):
        manifest.check_against([domain_x, domain_y])


def test_observation_rejects_non_finite_loss():
    with pytest.raises(ValidationError):
        Observation(ratio=MixingRatio.uniform(2), loss=float("inf"), iteration=0, manifest_digest="x")


def test_run_config_checks_sizes():
    with pytest.raises(ConfigInvalid):
        RunConfig(n_domains=5, mixture_size=3)
    config = RunConfig(n_domains=2, mixture_size=10)
    grid = config.lengthscale_grid()
    assert len(grid) == 25
    assert math.isclose(grid[0], 1e-2) and math.isclose(grid[-1], 1e1)


@pytest.mark.parametrize("value", [
    MixingRatio(weights=(0.1, 0.2, 0.7)),
    DomainDataset(name="web", points=(DataPoint(point_id="w0", influence=-0.25, payload_ref="s/0"),
                                      DataPoint(point_id="w1", influence=1e-300))),
    MixtureManifest(selections={"x": ("x-1", "x-0"), "y": ("y-2",)},
                    target_ratio=validate_ratio([2.0, 1.0]), total_size=3),
    Observation(ratio=validate_ratio([1.0, 3.0]), loss=0.123456789012345, iteration=4, manifest_digest="ab",
                sample_losses=(0.5, 0.123456789012345), sample_digests=("cd", "ab")),
    RunConfig(n_domains=3, mixture_size=30, sampling_size=4, seed=2**63 + 5, lengthscale_bounds=(0.05, 2.0),
              shift_epsilon=1e-3, maximize=True),
])
def test_json_round_trip(value):
    assert type(value).model_validate_json(value.model_dump_json()) == value


@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=10))
def test_ratio_json_round_trip_is_exact(raw):
    ratio = validate_ratio(raw)
    assert MixingRatio.model_validate_json(ratio.model_dump_json()).weights == ratio.weights
