"""
Order-statistic law of the inner estimator.

Each of k evaluated losses is y* plus a truncated-exponential error on [0, c];
the estimator keeps the minimum, whose CDF/PDF are closed form.
"""

import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize

from tools.seeding import SeedLike, as_generator


class TruncExpParams(BaseModel):
    """Truncated exponential with rate lambda on [0, cutoff], minimum of k draws."""

    model_config = ConfigDict(frozen=True)

    rate: float = Field(default=1.0, gt=0)
    cutoff: float = Field(default=1.0, gt=0)
    k: int = Field(default=1, ge=1)


def _norm(p: TruncExpParams) -> float:
    return -math.expm1(-p.rate * p.cutoff)  # 1 - e^{-lambda c}


def truncexp_cdf(u: float, p: TruncExpParams) -> float:
    if u <= 0.0:
        return 0.0
    if u >= p.cutoff:
        return 1.0
    return -math.expm1(-p.rate * u) / _norm(p)


def order_stat_cdf(u: float, p: TruncExpParams) -> float:
    """P(min of k draws <= u) = 1 - (1 - F(u))^k."""
    if u <= 0.0:
        return 0.0
    if u >= p.cutoff:
        return 1.0
    return 1.0 - (1.0 - truncexp_cdf(u, p)) ** p.k


def order_stat_pdf(u: float, p: TruncExpParams) -> float:
    if u < 0.0 or u > p.cutoff:
        return 0.0
    z = _norm(p)
    tail = (math.exp(-p.rate * u) - math.exp(-p.rate * p.cutoff)) / z
    return p.rate * p.k * math.exp(-p.rate * u) / z * tail ** (p.k - 1)


def order_stat_quantile(q: float, p: TruncExpParams, xtol: float = 1e-14) -> float:
    """Inverse of order_stat_cdf by bisection."""
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return p.cutoff
    return optimize.bisect(lambda u: order_stat_cdf(u, p) - q, 0.0, p.cutoff, xtol=xtol)


def expected_min(p: TruncExpParams) -> float:
    """E[min of k draws] by adaptive quadrature of u * pdf(u)."""
    value, _ = integrate.quad(lambda u: u * order_stat_pdf(u, p), 0.0, p.cutoff,
                              epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(value)


def pdf_mass(p: TruncExpParams) -> Tuple[float, float]:
    """Integral of the PDF over its support, with the quadrature error estimate."""
    value, err = integrate.quad(lambda u: order_stat_pdf(u, p), 0.0, p.cutoff,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(value), float(err)


def sample_truncexp(rate: float, cutoff: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the exponential truncated to [0, cutoff]."""
    u = rng.random(size)
    return -np.log1p(u * np.expm1(-rate * cutoff)) / rate


def sample_order_stats(p: TruncExpParams, size: int, rng_seed: SeedLike) -> np.ndarray:
    rng = as_generator(rng_seed)
    draws = sample_truncexp(p.rate, p.cutoff, size * p.k, rng).reshape(size, p.k)
    return np.clip(draws.min(axis=1), 0.0, p.cutoff)


def sample_order_stat(p: TruncExpParams, rng_seed: SeedLike) -> float:
    """Min of k truncated-exponential draws."""
    return float(sample_order_stats(p, 1, rng_seed)[0])
