"""Exposure curve, exposure-count distribution and per-node infection CDF."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy


@dataclass(frozen=True)
class ExposureCurve:
    """Infection probability on the x-th exposure,
    ``eta(x) = rho1 / rho2 * x * exp(1 - x / rho2)``.

    ``rho1`` is the peak probability and ``rho2`` the exposure count where it
    is attained.
    """

    rho1: float
    rho2: float

    def __post_init__(self):
        if not 0 < self.rho1 <= 1:
            raise ValueError(f"rho1 must lie in (0, 1], got {self.rho1}")
        if not self.rho2 > 0:
            raise ValueError(f"rho2 must be positive, got {self.rho2}")

    def __call__(self, x):
        return eta(self, x)

    @property
    def total_mass(self) -> float:
        """Limit of ``eta_integral`` as the upper bound goes to infinity."""
        return self.rho1 * math.e * self.rho2


def eta(curve: ExposureCurve, x):
    x = np.asarray(x, dtype=float)
    return curve.rho1 / curve.rho2 * x * np.exp(1.0 - x / curve.rho2)


def _one_minus_exp_poly(u):
    # 1 - exp(-u) * (1 + u), with a series where the direct form cancels
    u = np.asarray(u, dtype=float)
    direct = -np.expm1(-u) - u * np.exp(-u)
    series = u * u * (0.5 - u * (1.0 / 3.0 - u * (0.125 - u / 30.0)))
    return np.where(u < 1e-3, series, direct)


def eta_integral(curve: ExposureCurve, a):
    """``int_0^a eta(y) dy = rho1 * e * [rho2 - exp(-a/rho2) * (a + rho2)]``."""
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        out = curve.total_mass * _one_minus_exp_poly(a / curve.rho2)
    return np.where(np.isinf(a), curve.total_mass, out)


def poisson_cutoff(mean: float) -> int:
    """Largest exposure count kept in truncated sums over a Poisson(mean)."""
    mean = float(mean)
    return max(30, int(math.ceil(mean + 12.0 * math.sqrt(mean))))


def log_p_exp(n, mean):
    n = np.asarray(n, dtype=float)
    mean = np.asarray(mean, dtype=float)
    return xlogy(n, mean) - mean - gammaln(n + 1.0)


def p_exp(n, mean):
    """Probability of exactly ``n`` exposures when ``mean`` are expected.

    This is the small-step limit of the binomial exposure count, i.e. a
    Poisson pmf.
    """
    return np.exp(log_p_exp(n, mean))


def log_survival(curve: ExposureCurve, mean: float) -> float:
    """Log of ``sum_n p_exp(n) * prod_{k<=n} (1 - eta(k))``, the chance of
    still being uninfected after ``mean`` expected exposures."""
    mean = float(mean)
    if mean < 0:
        raise ValueError("mean exposure count must be non-negative")
    if mean == 0:
        return 0.0
    n = np.arange(poisson_cutoff(mean) + 1, dtype=float)
    with np.errstate(divide="ignore"):
        log_surv = np.concatenate([[0.0], np.cumsum(np.log1p(-eta(curve, n[1:])))])
    return min(float(logsumexp(log_p_exp(n, mean) + log_surv)), 0.0)


def infection_cdf(curve: ExposureCurve, mean: float) -> float:
    """Probability of having been infected given ``mean`` expected exposures.

    ``sum_n p_exp(n) * (1 - prod_{k<=n} (1 - eta(k)))``, evaluated as one minus
    the Poisson-weighted survival. When the survival underflows relative to 1
    the result rounds to 1.0; ``log_survival`` keeps the exact tail.
    """
    return float(-np.expm1(log_survival(curve, mean)))


class SurvivalTable:
    """Poisson-averaged survival ``phi(mu) = sum_n p_exp(n, mu) prod_{k<=n} (1 - eta(k))``.

    Tabulated with its derivative on a uniform grid and evaluated by cubic
    Hermite interpolation; beyond the grid ``phi`` is flat at its limit.
    """

    def __init__(self, curve: ExposureCurve, mu_max: float, step: float = 0.02):
        self.curve = curve
        self.step = step
        size = int(math.ceil(max(mu_max, 1.0) / step)) + 2
        grid = np.arange(size) * step
        k_max = poisson_cutoff(grid[-1]) + 1
        n = np.arange(k_max + 1, dtype=float)
        with np.errstate(divide="ignore"):
            log_s = np.concatenate([[0.0], np.cumsum(np.log1p(-eta(curve, n[1:])))])
        s = np.exp(log_s)
        # phi'(mu) = sum_n p(n) (s_{n+1} - s_n)
        ds = np.diff(s)
        phi = np.empty(size)
        dphi = np.empty(size)
        for a in range(0, size, 1024):
            g = grid[a:a + 1024, None]
            w = np.exp(log_p_exp(n[:-1], g))
            phi[a:a + 1024] = w @ s[:-1]
            dphi[a:a + 1024] = w @ ds
        self.grid, self.phi, self.dphi = grid, phi, dphi
        self.limit = float(s[-1])

    def __call__(self, mu, derivative: bool = False):
        mu = np.asarray(mu, dtype=float)
        h = self.step
        u = np.clip(mu / h, 0.0, self.grid.size - 1 - 1e-9)
        k = u.astype(np.int64)
        t = u - k
        p0, p1 = self.phi[k], self.phi[k + 1]
        m0, m1 = self.dphi[k] * h, self.dphi[k + 1] * h
        t2 = t * t
        t3 = t2 * t
        val = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1
        beyond = mu > self.grid[-1]
        val = np.where(beyond, self.phi[-1], val)
        if not derivative:
            return val
        d = ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * m1) / h
        return val, np.where(beyond, 0.0, d)


def expected_survival(curve: ExposureCurve, mean: float) -> float:
    """Direct truncated-sum evaluation of the Poisson-averaged survival."""
    return 1.0 - infection_cdf(curve, mean)
