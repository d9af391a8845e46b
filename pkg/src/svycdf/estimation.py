"""Weighted empirical CDFs, quantiles, the poverty rate and process paths.

The inverse-probability ("HT") empirical CDF puts mass 1/(N pi_i) on each
sampled response; its total mass is the population-size estimate divided
by N and need not be one.  The self-normalized ("HJ") variant divides by
that estimate instead of N and always has total mass one.  Both are
right-continuous step functions; quantiles use the generalized inverse
F^{-1}(a) = inf{t : F(t) >= a}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import population as pop
from .errors import (
    DegenerateBandwidthError,
    EstimationError,
    ParameterError,
    QuantileUndefinedError,
    ZeroDensityError,
)

_TIE_EPS = 1e-12
_SQRT_2PI = float(np.sqrt(2.0 * np.pi))

ProcessKind = Literal["HT_vs_FN", "HT_vs_F", "HJ_vs_FN", "HJ_vs_F", "G_pi", "Y_N"]


@dataclass(frozen=True, eq=False)
class WeightedStepFunction:
    """Right-continuous nondecreasing step function.

    ``locations`` are the distinct jump points in increasing order and
    ``cumulative[k]`` is the total mass of all jumps at or before
    ``locations[k]``; the last entry equals ``total_mass``.
    """

    locations: np.ndarray
    cumulative: np.ndarray
    total_mass: float

    @classmethod
    def from_weighted_points(cls, values, weights, total_mass: float | None = None):
        """Build from (possibly tied) points; ties are merged into one jump.

        ``total_mass`` optionally pins the final cumulative value exactly,
        shielding equality tests from cumulative-sum roundoff.
        """
        values = np.asarray(values, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if values.size == 0:
            raise EstimationError("a step function needs at least one jump")
        if values.shape != weights.shape:
            raise ParameterError("values and weights must have equal length")
        if np.any(weights < 0.0):
            raise ParameterError("weights must be nonnegative")
        locs, inverse = np.unique(values, return_inverse=True)
        merged = np.bincount(inverse, weights=weights, minlength=locs.size)
        cumulative = np.cumsum(merged)
        total = float(weights.sum()) if total_mass is None else float(total_mass)
        cumulative[-1] = total
        return cls(locations=locs, cumulative=cumulative, total_mass=total)

    def evaluate(self, t):
        """Value at t (scalar or array): mass of all jumps <= t."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.locations, t_arr, side="right")
        padded = np.concatenate([[0.0], self.cumulative])
        out = padded[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    __call__ = evaluate


def _require_values(draw):
    if draw.y_included is None:
        raise EstimationError("draw carries no response values; use draw(..., y=...) "
                              "or SampleDraw.with_values")
    if draw.included.size == 0:
        raise EstimationError("empty sample")
    if np.any(draw.pi_included <= 0.0):
        raise EstimationError("nonpositive inclusion probability among sampled units")


def ht_ecdf(draw, N: int) -> WeightedStepFunction:
    """Inverse-probability weighted empirical CDF normalized by N.

    Total mass equals the population-size estimate over N, typically
    close to but not exactly one.
    """
    _require_values(draw)
    weights = 1.0 / (N * draw.pi_included)
    return WeightedStepFunction.from_weighted_points(draw.y_included, weights)


def hajek_ecdf(draw, N: int) -> WeightedStepFunction:
    """Self-normalized weighted empirical CDF; total mass exactly one."""
    _require_values(draw)
    inv = 1.0 / draw.pi_included
    return WeightedStepFunction.from_weighted_points(
        draw.y_included, inv / inv.sum(), total_mass=1.0)


def weighted_quantile(f: WeightedStepFunction, alpha: float) -> float:
    """Smallest jump location t with f(t) >= alpha.

    Raises :class:`QuantileUndefinedError` when the requested level
    exceeds the total mass (possible for the unnormalized CDF); ties at
    floating resolution resolve downward.
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1], got {alpha}")
    if alpha > f.total_mass + _TIE_EPS:
        raise QuantileUndefinedError(
            f"level {alpha} exceeds total mass {f.total_mass:.12g}")
    idx = int(np.searchsorted(f.cumulative, alpha - _TIE_EPS, side="left"))
    idx = min(idx, f.locations.size - 1)
    return float(f.locations[idx])


def interpolated_weighted_quantile(f: WeightedStepFunction, alpha: float,
                                   n_points: int) -> float:
    """Weighted quantile with sample-scale linear interpolation.

    Mimics the interpolating weighted-quantile rule of common statistical
    packages: weights are normalized to sum to ``n_points`` (the number of
    sampled units behind ``f``), the pseudo-order position
    ``h = 1 + (n_points - 1) alpha`` is bracketed by the step inverse at
    ``floor(h)`` and ``floor(h) + 1``, and the bracket is combined
    linearly.  For equal weights this is the usual type-7 rule.  Mass
    functions not summing to one are handled through the level: the
    crossing of level ``alpha`` happens where the normalized function
    crosses ``alpha / total_mass``.  Unlike :func:`weighted_quantile`,
    a level beyond the total mass saturates at the largest jump (the
    clamped extrapolation of the reference interpolation machinery)
    instead of raising.
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1], got {alpha}")
    if n_points < 1:
        raise ParameterError("n_points must be at least 1")
    a_eff = min(alpha / f.total_mass, 1.0)
    pos = (f.cumulative / f.total_mass) * n_points
    h = 1.0 + (n_points - 1.0) * a_eff
    low = min(np.floor(h), float(n_points))
    frac = h - low
    last = f.locations.size - 1
    idx_low = min(int(np.searchsorted(pos, low - _TIE_EPS * n_points, side="left")), last)
    hi_target = min(low + 1.0, float(n_points))
    idx_high = min(int(np.searchsorted(pos, hi_target - _TIE_EPS * n_points, side="left")), last)
    if idx_high == idx_low:
        return float(f.locations[idx_low])
    return float((1.0 - frac) * f.locations[idx_low] + frac * f.locations[idx_high])


def poverty_rate(f: WeightedStepFunction, alpha: float, beta: float) -> float:
    """f evaluated at beta times its alpha-quantile."""
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"scale beta must lie in (0, 1], got {beta}")
    q = weighted_quantile(f, alpha)
    return float(f.evaluate(beta * q))


def hadamard_direction_value(density_at_quantile: float, density_at_scaled: float,
                             h_at_quantile: float, h_at_scaled: float,
                             beta: float) -> float:
    """Directional derivative of the poverty-rate functional.

    For a perturbation direction h, the derivative at a distribution with
    density f, quantile q and scaled point beta*q equals
    ``-beta (f(beta q) / f(q)) h(q) + h(beta q)``.
    """
    if density_at_quantile <= 0.0:
        raise ZeroDensityError("density at the quantile must be positive")
    return (-beta * (density_at_scaled / density_at_quantile) * h_at_quantile
            + h_at_scaled)


def kde_density(draw, N: int, t, mode: Literal["HT", "HJ"] = "HJ",
                bandwidth: float | None = None):
    """Weighted Gaussian kernel density estimate at t (scalar or array).

    Weight 1/pi_i per sampled unit, normalized by N ("HT") or by the
    population-size estimate ("HJ").  The automatic bandwidth is
    0.79 R n_s^{-1/5} with R the weighted interquartile range of the
    matching empirical CDF; pass ``bandwidth`` to override (test hook and
    escape hatch for degenerate samples).
    """
    _require_values(draw)
    if mode not in ("HT", "HJ"):
        raise ParameterError(f"mode must be 'HT' or 'HJ', got {mode!r}")
    n_s = draw.included.size
    if bandwidth is None:
        if n_s < 2:
            raise EstimationError("automatic bandwidth needs at least two sampled units")
        f = ht_ecdf(draw, N) if mode == "HT" else hajek_ecdf(draw, N)
        iqr = weighted_quantile(f, 0.75) - weighted_quantile(f, 0.25)
        if iqr <= 0.0:
            raise DegenerateBandwidthError("weighted interquartile range is zero")
        bandwidth = 0.79 * iqr * n_s ** (-0.2)
    elif bandwidth <= 0.0:
        raise ParameterError("bandwidth must be positive")
    denom = float(N) if mode == "HT" else draw.n_hat()
    t_arr = np.asarray(t, dtype=float)
    z = (np.atleast_1d(t_arr)[:, None] - draw.y_included[None, :]) / bandwidth
    kernel = np.exp(-0.5 * z * z) / _SQRT_2PI
    dens = kernel @ (1.0 / draw.pi_included) / (denom * bandwidth)
    return float(dens[0]) if np.isscalar(t) or t_arr.ndim == 0 else dens


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """A standardized empirical process evaluated on a grid."""

    grid: np.ndarray
    values: np.ndarray


def empirical_cdf_values(y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Unweighted empirical CDF of y on the grid."""
    y_sorted = np.sort(np.asarray(y, dtype=float))
    return np.searchsorted(y_sorted, grid, side="right") / y_sorted.size


def process_path(draw, population: pop.Population, grid, which: ProcessKind,
                 law: pop.SuperPopulationLaw | None = None) -> ProcessPath:
    """Evaluate a sqrt(n)-standardized estimation process on a grid.

    ``which`` selects the estimator and centering: the inverse-probability
    or self-normalized CDF against the population empirical CDF
    (``*_vs_FN``) or against the model CDF (``*_vs_F``), the raw weighted
    centered sum ``G_pi`` (sqrt(n)/N sum (xi_i/pi_i)(1{Y_i<=t} - F(t))), or
    the decomposition term ``Y_N`` (same with weights xi_i/pi_i - 1).  The
    standardization uses the design-expected size, not the realized one.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ParameterError("grid must be a sorted 1-d array")
    needs_law = which in ("HT_vs_F", "HJ_vs_F", "G_pi", "Y_N")
    if needs_law and law is None:
        raise ParameterError(f"process {which!r} requires the super-population law")
    root_n = np.sqrt(draw.expected_n)
    N = population.N

    if which in ("HT_vs_FN", "HT_vs_F", "G_pi", "Y_N"):
        cdf_vals = ht_ecdf(draw, N).evaluate(grid)
    else:
        cdf_vals = hajek_ecdf(draw, N).evaluate(grid)

    if which == "HT_vs_FN":
        vals = root_n * (cdf_vals - empirical_cdf_values(population.y, grid))
    elif which == "HT_vs_F":
        vals = root_n * (cdf_vals - pop.true_cdf(law, grid))
    elif which == "HJ_vs_FN":
        vals = root_n * (cdf_vals - empirical_cdf_values(population.y, grid))
    elif which == "HJ_vs_F":
        vals = root_n * (cdf_vals - pop.true_cdf(law, grid))
    elif which == "G_pi":
        nhat_over_n = draw.n_hat() / N
        vals = root_n * (cdf_vals - nhat_over_n * pop.true_cdf(law, grid))
    elif which == "Y_N":
        f_vals = pop.true_cdf(law, grid)
        fn_vals = empirical_cdf_values(population.y, grid)
        vals = root_n * (cdf_vals - fn_vals) - root_n * (draw.n_hat() / N - 1.0) * f_vals
    else:
        raise ParameterError(f"unknown process kind {which!r}")
    return ProcessPath(grid=grid, values=vals)
