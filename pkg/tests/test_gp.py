import dataclasses
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import DimensionMismatch, InsufficientData
from graph.state import MixingRatio, Observation
from surrogate import load_gp_checkpoint, save_gp_checkpoint
from surrogate.gp import (
    KernelParams,
    append_observation,
    build_gp_state,
    empty_state,
    fit_lengthscale,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
    se_kernel,
)


def _ratios(rows):
    return [MixingRatio(weights=tuple(float(v) for v in row)) for row in rows]


def _direct_posterior(x, y, q, lengthscale, zeta):
    def k(a, b):
        d = a[:, None, :] - b[None, :, :]
        return np.exp(-np.sum(d * d, axis=-1) / (2 * lengthscale ** 2))
    inverse = np.linalg.inv(k(x, x) + zeta * np.eye(len(x)))
    cross = k(x, q)
    mean = cross.T @ inverse @ y
    var = 1.0 - np.einsum("iq,ij,jq->q", cross, inverse, cross)
    return mean, var


def test_se_kernel_values():
    a = MixingRatio(weights=(1.0, 0.0))
    b = MixingRatio(weights=(0.0, 1.0))
    assert se_kernel(a, a, KernelParams(lengthscale=0.3)) == 1.0
    assert math.isclose(se_kernel(a, b, KernelParams(lengthscale=1.0)), math.exp(-1.0), rel_tol=1e-15)
    with pytest.raises(DimensionMismatch):
        se_kernel(a, MixingRatio.uniform(3), KernelParams())


def test_posterior_of_empty_state_is_prior():
    assert posterior(empty_state(3), MixingRatio.uniform(3)) == (0.0, 1.0)


def test_single_observation_closed_form():
    zeta, y = 0.01, 2.5
    r = MixingRatio(weights=(0.2, 0.8))
    state = build_gp_state(2, [r], [y], zeta=zeta)
    mean, std = posterior(state, r)
    assert math.isclose(mean, y / (1 + zeta), rel_tol=1e-12)
    assert math.isclose(std ** 2, 1 - 1 / (1 + zeta), rel_tol=1e-9)


def test_posterior_matches_direct_inverse():
    rng = np.random.default_rng(3)
    x = rng.dirichlet(np.ones(4), size=5)
    y = rng.normal(size=5)
    q = rng.dirichlet(np.ones(4), size=7)
    state = build_gp_state(4, _ratios(x), y.tolist(), kernel=KernelParams(lengthscale=0.7), zeta=0.01)
    mean, std = posterior_batch(state, q)
    oracle_mean, oracle_var = _direct_posterior(x, y, q, 0.7, 0.01)
    np.testing.assert_allclose(mean, oracle_mean, atol=1e-8)
    np.testing.assert_allclose(std ** 2, oracle_var, atol=1e-8)


def test_standardized_state_reverts_to_target_mean_far_from_data():
    r = _ratios([[0.1, 0.9], [0.15, 0.85], [0.2, 0.8]])
    targets = [10.0, 12.0, 11.0]
    kernel = KernelParams(lengthscale=0.05)
    far = MixingRatio(weights=(0.9, 0.1))
    raw_mean, _ = posterior(build_gp_state(2, r, targets, kernel=kernel), far)
    mean, std = posterior(build_gp_state(2, r, targets, kernel=kernel, standardize=True), far)
    assert abs(raw_mean) < 1e-6
    assert abs(mean - 11.0) < 1e-6
    assert abs(std - np.std(targets)) < 1e-6


def test_noise_interpolation_at_tiny_zeta():
    r = _ratios([[0.1, 0.9], [0.6, 0.4]])
    state = build_gp_state(2, r, [0.7, -0.3], zeta=1e-8)
    assert abs(posterior(state, r[0])[0] - 0.7) < 1e-4
    assert abs(posterior(state, r[1])[0] + 0.3) < 1e-4


def test_fit_lengthscale_prefers_long_scales_for_flat_targets():
    r = _ratios([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    grid = [0.1, 1.0, 10.0]
    assert fit_lengthscale(r, [1.0, 1.0, 1.0], 0.01, grid).lengthscale == 10.0
    assert fit_lengthscale(r, [1.0, 1.0, 1.0], 0.01, [0.5]).lengthscale == 0.5


def test_fit_lengthscale_needs_two_observations():
    with pytest.raises(InsufficientData):
        fit_lengthscale(_ratios([[0.5, 0.5]]), [1.0], 0.01, [1.0])


def test_log_likelihood_two_points():
    r = _ratios([[0.2, 0.8], [0.7, 0.3]])
    y = np.array([0.4, -1.1])
    zeta, m = 0.05, 0.6
    k12 = math.exp(-2 * 0.5 ** 2 / (2 * m ** 2))
    cov = np.array([[1 + zeta, k12], [k12, 1 + zeta]])
    expected = (-0.5 * y @ np.linalg.solve(cov, y) - 0.5 * math.log(np.linalg.det(cov))
                - math.log(2 * math.pi))
    got = log_marginal_likelihood(r, y.tolist(), zeta, KernelParams(lengthscale=m))
    assert abs(got - expected) < 1e-8


def test_append_duplicate_input_stays_positive_definite():
    r = MixingRatio(weights=(0.5, 0.5))
    state = empty_state(2)
    state = append_observation(state, Observation(ratio=r, loss=1.0, iteration=0, manifest_digest="a"))
    state = append_observation(state, Observation(ratio=r, loss=2.0, iteration=1, manifest_digest="b"))
    assert state.size == 2
    mean, _ = posterior(state, r)
    assert 1.0 < mean < 2.0


def test_append_leaves_old_state_untouched():
    r = _ratios([[0.2, 0.8], [0.6, 0.4]])
    old = build_gp_state(2, r, [0.1, 0.2])
    before = posterior(old, MixingRatio.uniform(2))
    new = append_observation(old, Observation(ratio=MixingRatio(weights=(0.9, 0.1)), loss=3.0,
                                              iteration=2, manifest_digest="c"))
    assert new.size == 3 and old.size == 2
    assert posterior(old, MixingRatio.uniform(2)) == before


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_exchangeability_and_variance_bounds(seed):
    rng = np.random.default_rng(seed)
    n, t = int(rng.integers(2, 6)), int(rng.integers(1, 9))
    x = rng.dirichlet(np.ones(n), size=t)
    y = rng.normal(size=t)
    q = rng.dirichlet(np.ones(n), size=5)
    perm = rng.permutation(t)
    a = build_gp_state(n, _ratios(x), y.tolist())
    b = build_gp_state(n, _ratios(x[perm]), y[perm].tolist())
    mean_a, std_a = posterior_batch(a, q)
    mean_b, std_b = posterior_batch(b, q)
    np.testing.assert_allclose(mean_a, mean_b, atol=1e-8)
    np.testing.assert_allclose(std_a, std_b, atol=1e-8)
    assert np.all(std_a >= 0.0) and np.all(std_a ** 2 <= 1.0 + 1e-12)


def test_checkpoint_restores_posterior(tmp_path):
    r = _ratios([[0.2, 0.8], [0.6, 0.4], [0.5, 0.5]])
    state = build_gp_state(2, r, [0.3, 0.1, 0.2], kernel=KernelParams(lengthscale=0.4), standardize=True)
    path = tmp_path / "gp_checkpoint.json"
    save_gp_checkpoint(state, path)
    restored = load_gp_checkpoint(path)
    q = np.array([[0.3, 0.7], [0.8, 0.2]])
    np.testing.assert_allclose(posterior_batch(restored, q)[0], posterior_batch(state, q)[0], atol=1e-12)
    assert load_gp_checkpoint(tmp_path / "missing.json") is None


def test_negative_variance_is_clamped_and_reported(caplog):
    ratios = _ratios([[0.2, 0.8], [0.6, 0.4]])
    state = build_gp_state(2, ratios, [1.0, 0.0], zeta=0.01)
    with caplog.at_level(logging.WARNING, logger="surrogate.gp"):
        posterior_batch(state, np.array([[0.2, 0.8], [0.3, 0.7]]))
    assert not caplog.records

    broken = dataclasses.replace(state, chol_factor=state.chol_factor * 0.5)
    with caplog.at_level(logging.WARNING, logger="surrogate.gp"):
        _, std = posterior(broken, ratios[0])
    assert std == 0.0
    assert "below zero" in caplog.text
