"""Replicated-population, replicated-sample Monte Carlo experiments.

A scenario draws ``n_populations`` populations from a super-population
law and, for each, ``n_samples`` samples from one of four designs (SI:
simple random sampling without replacement, BE: Bernoulli, PO: Poisson
with a low/high split of inclusion probabilities over a randomly ordered
population, REJ: size-n conditional Poisson calibrated to the PO
probabilities).  It reports percent relative bias of the poverty-rate
estimators against the population and model parameters, relative bias of
their plug-in variance estimators against the closed-form asymptotic
variance, and coverage of 95% Wald intervals.

Every (population, sample) cell derives its random stream from the
scenario seed and its own index, and reductions run in index order, so
reports are bitwise reproducible for any worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import stats as sps

from . import asymptotics as asy
from . import designs as dsg
from . import estimation as est
from . import oracle as orc
from . import population as pop
from .errors import (
    DegenerateBandwidthError,
    DiagnosticError,
    EstimationError,
    ParameterError,
    ScenarioError,
)
from .streams import child_seed, substream

logger = logging.getLogger(__name__)

DesignLabel = Literal["SI", "BE", "PO", "REJ"]
ESTIMATORS = ("HT", "HJ")
CENTERS = ("FN", "F")   # population parameter vs model parameter

#: fraction of failed cells (per estimator) tolerated before the scenario errors
FAILURE_BUDGET = 0.01

#: inclusion probabilities of the unequal-probability split, as multiples of n/N
PO_LOW, PO_HIGH = 0.4, 1.6


@dataclass(frozen=True)
class Scenario:
    """One simulation cell: population/sample sizes, design, law, targets."""

    N: int
    n: int
    design: DesignLabel
    law: pop.SuperPopulationLaw
    alpha: float
    beta: float
    n_populations: int
    n_samples: int
    seed: int

    def __post_init__(self):
        if not 1 <= self.n <= self.N:
            raise ScenarioError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")
        if self.n_populations < 1 or self.n_samples < 1:
            raise ScenarioError("replication counts must be at least 1")
        if self.design not in ("SI", "BE", "PO", "REJ"):
            raise ScenarioError(f"unknown design label {self.design!r}")
        if self.design in ("PO", "REJ") and PO_HIGH * self.n / self.N > 1.0:
            raise ScenarioError(
                f"{self.design} needs {PO_HIGH}*n/N <= 1, got {PO_HIGH * self.n / self.N:.3g}")


@dataclass(eq=False)
class MonteCarloReport:
    """Aggregated scenario results; percentages throughout."""

    scenario: Scenario
    rb_phi: dict            # (estimator, center) -> percent relative bias
    rb_phi_se: dict         # same keys -> cluster (per-population) MC standard error
    rb_av: dict             # estimator -> percent relative bias of the variance estimator
    rb_av_se: dict
    coverage: dict          # (estimator, center) -> percent coverage of 95% intervals
    mc_variance: dict       # estimator -> n * Var(phi_hat) pooled over all cells
    n_cells: int
    n_failures: dict        # estimator -> failed cells
    timing_seconds: float
    process_cov_error: float | None = None


# ---------------------------------------------------------------------------
# Design construction
# ---------------------------------------------------------------------------

def _split_probabilities(N: int, n: int) -> np.ndarray:
    """Unpermuted low/high inclusion probabilities summing to n."""
    base = n / N
    pi = np.full(N, PO_HIGH * base)
    pi[: N // 2] = PO_LOW * base
    if N % 2:
        # odd N: adjust one unit so the expected size stays exactly n
        pi[N // 2] = n - PO_LOW * base * (N // 2) - PO_HIGH * base * (N - N // 2 - 1)
    return pi


def _base_design(sc: Scenario, rej_p: np.ndarray | None) -> dsg.Design:
    if sc.design == "SI":
        return dsg.srswor(sc.N, sc.n)
    if sc.design == "BE":
        return dsg.bernoulli(sc.N, sc.n / sc.N)
    if sc.design == "PO":
        return dsg.poisson(_split_probabilities(sc.N, sc.n))
    return dsg.rejective(rej_p, sc.n)


def _population_design(sc: Scenario, pop_index: int, rej_p: np.ndarray | None) -> dsg.Design:
    """Design for one population; PO/REJ randomly reorder the units."""
    if sc.design in ("SI", "BE"):
        return _base_design(sc, rej_p)
    perm = substream(sc.seed, pop_index, 1).permutation(sc.N)
    if sc.design == "PO":
        return dsg.poisson(_split_probabilities(sc.N, sc.n)[perm])
    return dsg.rejective(rej_p[perm], sc.n)


def scenario_design_constants(sc: Scenario, rej_p: np.ndarray | None = None) -> asy.DesignConstants:
    """Covariance constants of the scenario design (permutation invariant)."""
    if sc.design == "REJ" and rej_p is None:
        rej_p = _calibrated_rejective_p(sc)
    return dsg.design_constants(_base_design(sc, rej_p))


def _calibrated_rejective_p(sc: Scenario) -> np.ndarray:
    target = _split_probabilities(sc.N, sc.n)
    if np.any(target >= 1.0) or np.any(target <= 0.0):
        raise ScenarioError("REJ target inclusion probabilities must lie strictly in (0, 1)")
    return dsg.calibrate_rejective_p(target, sc.n)


# ---------------------------------------------------------------------------
# Per-cell estimation
# ---------------------------------------------------------------------------

def _phi_and_av(draw, N, constants, alpha, beta, mode):
    """Poverty-rate estimate and plug-in variance for one mode.

    Follows the simulation protocol: the quantile entering the estimate,
    the bandwidth and the density evaluation points uses the
    interpolating weighted rule.  Returns (phi_hat, av_hat) or raises an
    EstimationError.  A sample in which every response is identical
    yields a legitimate zero variance (zero-width interval) rather than
    a bandwidth failure.
    """
    f = est.ht_ecdf(draw, N) if mode == "HT" else est.hajek_ecdf(draw, N)
    qhat = est.interpolated_weighted_quantile(f, alpha, draw.included.size)
    phi_hat = float(f.evaluate(beta * qhat))
    try:
        av_hat = asy.plugin_poverty_variance(draw, N, constants, alpha, beta,
                                             mode=mode, quantile_method="interpolated")
    except DegenerateBandwidthError:
        if np.all(draw.y_included == draw.y_included[0]):
            av_hat = 0.0
        else:
            raise
    return phi_hat, av_hat


def _relative_error(value: float, target: float):
    if target != 0.0:
        return (value - target) / target
    return 0.0 if value == 0.0 else None


def _new_accumulator() -> dict:
    acc = {
        "rel": {(e, c): 0.0 for e in ESTIMATORS for c in CENTERS},
        "rel_count": {(e, c): 0 for e in ESTIMATORS for c in CENTERS},
        "cover": {(e, c): 0 for e in ESTIMATORS for c in CENTERS},
        "av_rel": {e: 0.0 for e in ESTIMATORS},
        "av_count": {e: 0 for e in ESTIMATORS},
        "phi_sum": {e: 0.0 for e in ESTIMATORS},
        "phi_sq": {e: 0.0 for e in ESTIMATORS},
        "phi_count": {e: 0 for e in ESTIMATORS},
        "failures": {e: 0 for e in ESTIMATORS},
        "zero_target": 0,
        "cells": 0,
    }
    return acc


def _run_population_block(sc: Scenario, indices, rej_p, phi_f: float,
                          av_ref: dict) -> list[dict]:
    """Worker: all samples of the populations in ``indices``."""
    out = []
    for i in indices:
        population = pop.generate_population(sc.law, sc.N, child_seed(sc.seed, i, 0))
        fn = est.WeightedStepFunction.from_weighted_points(
            population.y, np.full(sc.N, 1.0 / sc.N), total_mass=1.0)
        phi_fn = est.poverty_rate(fn, sc.alpha, sc.beta)
        design = _population_design(sc, i, rej_p)
        constants = dsg.design_constants(design)
        targets = {"FN": phi_fn, "F": phi_f}
        acc = _new_accumulator()
        for j in range(sc.n_samples):
            rng = substream(sc.seed, i, 2, j)
            sample = dsg.draw(design, rng, y=population.y)
            acc["cells"] += 1
            results = {}
            for mode in ESTIMATORS:
                try:
                    results[mode] = _phi_and_av(
                        sample, sc.N, constants, sc.alpha, sc.beta, mode)
                except EstimationError:
                    acc["failures"][mode] += 1
            if sc.design == "SI" and "HT" in results and "HJ" in results:
                if results["HT"][0] != results["HJ"][0]:
                    raise ScenarioError(
                        "SI estimators must coincide exactly; internal inconsistency")
            for mode, (phi_hat, av_hat) in results.items():
                acc["phi_sum"][mode] += phi_hat
                acc["phi_sq"][mode] += phi_hat * phi_hat
                acc["phi_count"][mode] += 1
                if np.isfinite(av_ref[mode]):
                    rel_av = _relative_error(av_hat, av_ref[mode])
                    if rel_av is None:
                        acc["zero_target"] += 1
                    else:
                        acc["av_rel"][mode] += rel_av
                        acc["av_count"][mode] += 1
                lo, hi = asy.wald_interval(phi_hat, max(av_hat, 0.0), sc.n)
                for center in CENTERS:
                    rel = _relative_error(phi_hat, targets[center])
                    if rel is None:
                        acc["zero_target"] += 1
                        continue
                    acc["rel"][(mode, center)] += rel
                    acc["rel_count"][(mode, center)] += 1
                    if lo <= targets[center] <= hi:
                        acc["cover"][(mode, center)] += 1
        out.append(acc)
    return out


def _map_population_blocks(sc: Scenario, per_block: Callable, workers: int) -> list:
    """Run ``per_block`` over population index blocks, in index order."""
    indices = list(range(sc.n_populations))
    if workers <= 1 or sc.n_populations == 1:
        return per_block(indices)
    workers = min(workers, sc.n_populations)
    blocks = [indices[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(per_block, blocks))
    by_index: dict[int, object] = {}
    for block, res in zip(blocks, results):
        for idx, item in zip(block, res):
            by_index[idx] = item
    return [by_index[i] for i in indices]


class _PopulationWorker:
    """Picklable wrapper binding scenario-level arguments for pool workers."""

    def __init__(self, sc, rej_p, phi_f, av_ref):
        self.sc, self.rej_p, self.phi_f, self.av_ref = sc, rej_p, phi_f, av_ref

    def __call__(self, indices):
        return _run_population_block(self.sc, indices, self.rej_p, self.phi_f, self.av_ref)


def run_scenario(sc: Scenario, workers: int = 1,
                 process_check: tuple | None = None) -> MonteCarloReport:
    """Execute one scenario and aggregate its Monte Carlo report.

    Relative biases are percent averages of (estimate - target)/target
    with the model parameter or the per-population parameter as target;
    variance-estimator bias is measured against the closed-form
    asymptotic variance; coverage counts 95% Wald intervals containing
    the target.  Cells where an estimator is undefined are counted and
    excluded; past a 1% failure share the scenario errors out.

    ``process_check = (grid, form)`` additionally replicates the chosen
    standardized process and records the max-abs gap between its
    empirical covariance on the grid and the closed-form limit.
    """
    start = time.perf_counter()
    phi_f = pop.true_poverty_rate(sc.law, sc.alpha, sc.beta)
    rej_p = _calibrated_rejective_p(sc) if sc.design == "REJ" else None
    constants = scenario_design_constants(sc, rej_p)
    if sc.law.kind == "discrete":
        av_ref = {e: float("nan") for e in ESTIMATORS}   # no density: variance RB undefined
    else:
        av_ref = {"HT": asy.poverty_variance_ht(constants, sc.law, sc.alpha, sc.beta),
                  "HJ": asy.poverty_variance_hj(constants, sc.law, sc.alpha, sc.beta)}
    worker = _PopulationWorker(sc, rej_p, phi_f, av_ref)
    per_pop = _map_population_blocks(sc, worker, workers)

    rb_phi, rb_phi_se, coverage = {}, {}, {}
    for key in ((e, c) for e in ESTIMATORS for c in CENTERS):
        sums = sum(acc["rel"][key] for acc in per_pop)
        counts = sum(acc["rel_count"][key] for acc in per_pop)
        covers = sum(acc["cover"][key] for acc in per_pop)
        rb_phi[key] = 100.0 * sums / counts if counts else float("nan")
        coverage[key] = 100.0 * covers / counts if counts else float("nan")
        pop_means = [acc["rel"][key] / acc["rel_count"][key]
                     for acc in per_pop if acc["rel_count"][key]]
        rb_phi_se[key] = (100.0 * float(np.std(pop_means, ddof=1)) / np.sqrt(len(pop_means))
                          if len(pop_means) > 1 else float("nan"))

    rb_av, rb_av_se, mc_variance, n_failures = {}, {}, {}, {}
    for e in ESTIMATORS:
        sums = sum(acc["av_rel"][e] for acc in per_pop)
        counts = sum(acc["av_count"][e] for acc in per_pop)
        rb_av[e] = 100.0 * sums / counts if counts else float("nan")
        pop_means = [acc["av_rel"][e] / acc["av_count"][e]
                     for acc in per_pop if acc["av_count"][e]]
        rb_av_se[e] = (100.0 * float(np.std(pop_means, ddof=1)) / np.sqrt(len(pop_means))
                       if len(pop_means) > 1 else float("nan"))
        c = sum(acc["phi_count"][e] for acc in per_pop)
        if c:
            mean = sum(acc["phi_sum"][e] for acc in per_pop) / c
            second = sum(acc["phi_sq"][e] for acc in per_pop) / c
            mc_variance[e] = sc.n * max(second - mean * mean, 0.0)
        else:
            mc_variance[e] = float("nan")
        n_failures[e] = sum(acc["failures"][e] for acc in per_pop)

    n_cells = sum(acc["cells"] for acc in per_pop)
    if sum(acc["zero_target"] for acc in per_pop):
        raise ScenarioError("relative bias undefined: zero target with nonzero estimates")
    for e in ESTIMATORS:
        if n_failures[e] > FAILURE_BUDGET * n_cells:
            raise ScenarioError(
                f"{e} failed in {n_failures[e]} of {n_cells} cells "
                f"(> {FAILURE_BUDGET:.0%} budget)")
    if sc.law.kind == "exponential":
        positives = [k for k, v in rb_phi.items() if np.isfinite(v) and v > 0.0]
        if positives:
            logger.warning("positive relative bias for %s (typically negative "
                           "for exponential populations)", positives)
    process_cov_error = None
    if process_check is not None:
        grid, form = process_check
        process_cov_error = process_covariance_check(sc, grid, form,
                                                     workers=workers).max_abs_error
    return MonteCarloReport(
        scenario=sc, rb_phi=rb_phi, rb_phi_se=rb_phi_se, rb_av=rb_av,
        rb_av_se=rb_av_se, coverage=coverage, mc_variance=mc_variance,
        n_cells=n_cells, n_failures=n_failures,
        timing_seconds=time.perf_counter() - start,
        process_cov_error=process_cov_error)


# ---------------------------------------------------------------------------
# Process covariance diagnostics
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ProcessCovarianceResult:
    """Empirical versus limit covariance of a standardized process on a grid."""

    form: str
    grid: np.ndarray
    empirical: np.ndarray
    limit: np.ndarray
    entry_se: np.ndarray
    max_abs_error: float


class _ProcessWorker:
    def __init__(self, sc, grid, form, rej_p):
        self.sc, self.grid, self.form, self.rej_p = sc, grid, form, rej_p

    def __call__(self, indices):
        sc = self.sc
        grid = self.grid
        out = []
        for i in indices:
            population = pop.generate_population(sc.law, sc.N, child_seed(sc.seed, i, 0))
            design = _population_design(sc, i, self.rej_p)
            k = grid.size
            vec = np.zeros(k)
            outer = np.zeros((k, k))
            for j in range(sc.n_samples):
                rng = substream(sc.seed, i, 2, j)
                sample = dsg.draw(design, rng, y=population.y)
                path = est.process_path(sample, population, grid, self.form, law=sc.law)
                vec += path.values
                outer += np.outer(path.values, path.values)
            out.append((vec, outer, sc.n_samples))
        return out


def process_covariance_check(sc: Scenario, grid, form: str,
                             workers: int = 1) -> ProcessCovarianceResult:
    """Compare the replicated empirical covariance of a process on a grid
    with its closed-form limit; returns entrywise errors and their MC
    standard errors (per-population cluster estimate)."""
    grid = np.asarray(grid, dtype=float)
    rej_p = _calibrated_rejective_p(sc) if sc.design == "REJ" else None
    per_pop = _map_population_blocks(sc, _ProcessWorker(sc, grid, form, rej_p), workers)
    count = sum(c for _, _, c in per_pop)
    mean = sum(v for v, _, _ in per_pop) / count
    second = sum(o for _, o, _ in per_pop) / count
    empirical = second - np.outer(mean, mean)
    pop_means = np.array([o / c for _, o, c in per_pop])
    entry_se = (np.std(pop_means, axis=0, ddof=1) / np.sqrt(len(per_pop))
                if len(per_pop) > 1 else np.full_like(empirical, np.nan))
    constants = scenario_design_constants(sc, rej_p)
    limit = asy.limit_covariance_matrix(constants, sc.law, form, grid)
    return ProcessCovarianceResult(
        form=form, grid=grid, empirical=empirical, limit=limit, entry_se=entry_se,
        max_abs_error=float(np.max(np.abs(empirical - limit))))


# ---------------------------------------------------------------------------
# Normality diagnostics
# ---------------------------------------------------------------------------

class _StatisticWorker:
    def __init__(self, sc, statistic, rej_p):
        self.sc, self.statistic, self.rej_p = sc, statistic, rej_p

    def __call__(self, indices):
        sc = self.sc
        out = []
        for i in indices:
            population = pop.generate_population(sc.law, sc.N, child_seed(sc.seed, i, 0))
            design = _population_design(sc, i, self.rej_p)
            vals = np.empty(sc.n_samples)
            for j in range(sc.n_samples):
                rng = substream(sc.seed, i, 2, j)
                sample = dsg.draw(design, rng, y=population.y)
                if self.statistic == "ht_mean":
                    vals[j] = float(np.sum(sample.y_included / sample.pi_included)) / sc.N
                else:
                    mode = "HT" if self.statistic == "phi_ht" else "HJ"
                    f = (est.ht_ecdf(sample, sc.N) if mode == "HT"
                         else est.hajek_ecdf(sample, sc.N))
                    vals[j] = est.poverty_rate(f, sc.alpha, sc.beta)
            if self.statistic == "ht_mean":
                center = float(np.mean(population.y))
                scale = np.sqrt(max(orc.exact_sn2(design, population.y), 0.0))
            else:
                center = None
                scale = None
            out.append((vals, center, scale))
        return out


def normality_diagnostic(sc: Scenario, statistic: Literal["phi_ht", "phi_hj", "ht_mean"],
                         workers: int = 1) -> dict:
    """Standardize a replicated statistic by its asymptotic scale and report
    skewness, excess kurtosis and the Kolmogorov-Smirnov distance to the
    standard normal."""
    if statistic not in ("phi_ht", "phi_hj", "ht_mean"):
        raise ParameterError(f"unknown statistic {statistic!r}")
    if sc.n_populations * sc.n_samples < 1000:
        raise ParameterError("normality diagnostics need at least 1000 replications")
    rej_p = _calibrated_rejective_p(sc) if sc.design == "REJ" else None
    per_pop = _map_population_blocks(sc, _StatisticWorker(sc, statistic, rej_p), workers)
    z_parts = []
    if statistic == "ht_mean":
        for vals, center, scale in per_pop:
            if scale is None or scale <= 0.0:
                raise DiagnosticError("design variance of the weighted mean is zero")
            z_parts.append((vals - center) / scale)
    else:
        constants = scenario_design_constants(sc, rej_p)
        try:
            sigma2 = (asy.poverty_variance_ht(constants, sc.law, sc.alpha, sc.beta)
                      if statistic == "phi_ht"
                      else asy.poverty_variance_hj(constants, sc.law, sc.alpha, sc.beta))
        except (ParameterError, EstimationError) as exc:
            raise DiagnosticError(f"asymptotic variance unavailable: {exc}") from exc
        if sigma2 <= 0.0:
            raise DiagnosticError("asymptotic variance is zero")
        phi_f = pop.true_poverty_rate(sc.law, sc.alpha, sc.beta)
        scale = np.sqrt(sigma2 / sc.n)
        for vals, _, _ in per_pop:
            z_parts.append((vals - phi_f) / scale)
    z = np.concatenate(z_parts)
    if float(np.var(z)) == 0.0:
        raise DiagnosticError("replicated statistic has zero variance")
    return {
        "skewness": float(sps.skew(z)),
        "excess_kurtosis": float(sps.kurtosis(z, fisher=True)),
        "ks_distance": float(sps.kstest(z, "norm").statistic),
        "replications": int(z.size),
    }
