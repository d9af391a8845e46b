"""Limit covariances and poverty-rate asymptotic variances.

The standardized weighted empirical processes converge to mean-zero
Gaussian processes whose covariance functions are determined by two
design constants ``mu1`` and ``mu2`` together with the sampling fraction
limit ``lam``.  This module evaluates those covariance forms, the
closed-form asymptotic variances of the poverty-rate estimators, and
their plug-in counterparts computed from a realized sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import estimation, population
from .errors import DegenerateBandwidthError, ParameterError, ZeroDensityError

CovarianceForm = Literal["HT_vs_FN", "HT_vs_F", "HJ_vs_FN", "HJ_vs_F"]

#: two-sided 95% normal quantile used for Wald intervals
Z_95 = 1.959964


@dataclass(frozen=True)
class DesignConstants:
    """Scalar constants of a design entering the limit covariances.

    ``lam``
        sampling fraction n/N.
    ``mu1``
        scaled mean of (1/pi_i - 1); always nonnegative.
    ``mu2``
        scaled sum of the pairwise inclusion ratios (pi_ij - pi_i pi_j)
        / (pi_i pi_j) over distinct pairs.
    ``d``
        sum of pi_i (1 - pi_i), the entropy scale of the design.

    The derived coefficients ``gamma1 = mu1 + lam`` and
    ``gamma2 = mu2 - lam`` drive the super-population-centered forms.
    """

    lam: float
    mu1: float
    mu2: float
    d: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0 + 1e-12:
            raise ParameterError(f"lam must lie in [0, 1], got {self.lam}")
        if self.mu1 < -1e-12:
            raise ParameterError(f"mu1 must be nonnegative, got {self.mu1}")

    @property
    def gamma1(self) -> float:
        return self.mu1 + self.lam

    @property
    def gamma2(self) -> float:
        return self.mu2 - self.lam


def limit_covariance(constants: DesignConstants, law: population.SuperPopulationLaw,
                     form: CovarianceForm, s: float, t: float) -> float:
    """Covariance of the limiting Gaussian process at (s, t).

    Forms: ``HT_vs_FN`` mu1 F(s^t) + mu2 F(s)F(t); ``HT_vs_F`` with
    (gamma1, gamma2) instead; ``HJ_vs_FN`` mu1 (F(s^t) - F(s)F(t));
    ``HJ_vs_F`` gamma1 (F(s^t) - F(s)F(t)).
    """
    fs = population.true_cdf(law, s)
    ft = population.true_cdf(law, t)
    fmin = population.true_cdf(law, min(s, t))
    if form == "HT_vs_FN":
        return constants.mu1 * fmin + constants.mu2 * fs * ft
    if form == "HT_vs_F":
        return constants.gamma1 * fmin + constants.gamma2 * fs * ft
    if form == "HJ_vs_FN":
        return constants.mu1 * (fmin - fs * ft)
    if form == "HJ_vs_F":
        return constants.gamma1 * (fmin - fs * ft)
    raise ParameterError(f"unknown covariance form {form!r}")


def limit_covariance_matrix(constants: DesignConstants, law: population.SuperPopulationLaw,
                            form: CovarianceForm, grid) -> np.ndarray:
    """Limit covariance evaluated on a grid; symmetric k x k matrix."""
    grid = np.asarray(grid, dtype=float)
    k = grid.size
    out = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            out[a, b] = out[b, a] = limit_covariance(constants, law, form, grid[a], grid[b])
    return out


def _poverty_ingredients(law, alpha, beta):
    q = population.true_quantile(law, alpha)
    fq = population.true_density(law, q)
    if fq <= 0.0:
        raise ZeroDensityError(f"density vanishes at the {alpha}-quantile")
    ratio = population.true_density(law, beta * q) / fq
    phi = population.true_cdf(law, beta * q)
    return ratio, phi


def poverty_variance_ht(constants: DesignConstants, law: population.SuperPopulationLaw,
                        alpha: float, beta: float) -> float:
    """Asymptotic variance of sqrt(n) times the inverse-probability-weighted
    poverty rate error, for deterministic inclusion probabilities."""
    g1, g2 = constants.gamma1, constants.gamma2
    r, phi = _poverty_ingredients(law, alpha, beta)
    br = beta * r
    return (br * br * (g1 * alpha + g2 * alpha * alpha)
            + g1 * phi + g2 * phi * phi
            - 2.0 * br * phi * (g1 + g2 * alpha))


def poverty_variance_hj(constants: DesignConstants, law: population.SuperPopulationLaw,
                        alpha: float, beta: float) -> float:
    """Asymptotic variance of sqrt(n) times the self-normalized
    poverty rate error; linear in gamma1."""
    g1 = constants.gamma1
    r, phi = _poverty_ingredients(law, alpha, beta)
    br = beta * r
    return (br * br * g1 * alpha * (1.0 - alpha)
            + g1 * phi * (1.0 - phi)
            - 2.0 * br * phi * g1 * (1.0 - alpha))


def plugin_poverty_variance(draw, N: int, constants: DesignConstants,
                            alpha: float, beta: float,
                            mode: Literal["HT", "HJ"] = "HJ",
                            quantile_method: Literal["step", "interpolated"] = "step") -> float:
    """Variance estimate obtained by plugging the weighted empirical CDF,
    its quantile and a kernel density estimate into the closed form.

    All empirical ingredients come from the same mode: the HT variant
    uses the inverse-probability CDF normalized by N, the HJ variant the
    self-normalized CDF.  The design constants are supplied by the caller
    (they are known, not estimated).  ``quantile_method`` selects the
    generalized-inverse quantile ("step") or the interpolating rule used
    by the simulation protocol ("interpolated"); the bandwidth follows
    the same rule through the interquartile range.
    """
    if mode == "HT":
        fhat = estimation.ht_ecdf(draw, N)
    elif mode == "HJ":
        fhat = estimation.hajek_ecdf(draw, N)
    else:
        raise ParameterError(f"mode must be 'HT' or 'HJ', got {mode!r}")
    if quantile_method == "interpolated":
        n_s = draw.included.size
        quantile = lambda level: estimation.interpolated_weighted_quantile(fhat, level, n_s)
        iqr = quantile(0.75) - quantile(0.25)
        if iqr <= 0.0:
            raise DegenerateBandwidthError("weighted interquartile range is zero")
        bandwidth = 0.79 * iqr * n_s ** (-0.2)
    elif quantile_method == "step":
        quantile = lambda level: estimation.weighted_quantile(fhat, level)
        bandwidth = None
    else:
        raise ParameterError(f"unknown quantile method {quantile_method!r}")
    qhat = quantile(alpha)
    phihat = float(fhat.evaluate(beta * qhat))
    f_q = estimation.kde_density(draw, N, qhat, mode=mode, bandwidth=bandwidth)
    f_bq = estimation.kde_density(draw, N, beta * qhat, mode=mode, bandwidth=bandwidth)
    if f_q <= 0.0:
        raise ZeroDensityError("estimated density vanishes at the quantile")
    br = beta * (f_bq / f_q)
    g1, g2 = constants.gamma1, constants.gamma2
    if mode == "HT":
        return (br * br * (g1 * alpha + g2 * alpha * alpha)
                + g1 * phihat + g2 * phihat * phihat
                - 2.0 * br * phihat * (g1 + g2 * alpha))
    return (br * br * g1 * alpha * (1.0 - alpha)
            + g1 * phihat * (1.0 - phihat)
            - 2.0 * br * phihat * g1 * (1.0 - alpha))


def wald_interval(estimate: float, variance_of_root_n: float, n: float) -> tuple[float, float]:
    """95% Wald interval for an estimate whose sqrt(n)-scaled error has the
    given asymptotic variance."""
    if variance_of_root_n < 0.0 or n <= 0.0:
        raise ParameterError("need nonnegative variance and positive n")
    half = Z_95 * np.sqrt(variance_of_root_n / n)
    return (estimate - half, estimate + half)
