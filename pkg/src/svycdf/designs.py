"""Single-stage sampling designs with exact inclusion probabilities.

Four designs are provided: simple random sampling without replacement
(``srswor``), Bernoulli sampling, Poisson sampling, and conditional
Poisson sampling of fixed size n (``rejective``), the maximum-entropy
fixed-size design whose mass is proportional to the product of the odds
p_i / (1 - p_i) over sampled units.

Rejective quantities are exact, not asymptotic: first and second order
inclusion probabilities come from a Poisson-binomial dynamic program over
prefix and suffix partial-sum distributions, and the sampler walks the
units once, including each with the conditional probability of still
reaching the target size.  A rejection sampler (redraw Poisson samples
until the size hits n) is kept as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .asymptotics import DesignConstants
from .errors import (
    CalibrationError,
    CapacityError,
    DegenerateDesignError,
    ParameterError,
)

_P_CLIP = 1e-12


# ---------------------------------------------------------------------------
# Poisson-binomial dynamic program
# ---------------------------------------------------------------------------

def _pb_forward(probs: np.ndarray, n_max: int) -> np.ndarray:
    """Partial-sum PMF table of independent Bernoulli trials.

    Row i holds P(X_1 + ... + X_i = k) for k = 0..n_max; counts above
    n_max are truncated away, so rows sum to at most one.
    """
    m = probs.size
    table = np.zeros((m + 1, n_max + 1))
    table[0, 0] = 1.0
    for i in range(m):
        p = probs[i]
        row = table[i]
        nxt = row * (1.0 - p)
        nxt[1:] += row[:-1] * p
        table[i + 1] = nxt
    return table


@dataclass(eq=False)
class PoissonBinomialTable:
    """Exact PMF table T[i][k] = P(sum of the first i trials = k), k <= n_max."""

    probs: np.ndarray
    n_max: int
    table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if np.any((probs < 0.0) | (probs > 1.0)):
            raise ParameterError("trial probabilities must lie in [0, 1]")
        if self.n_max < 0:
            raise ParameterError("n_max must be nonnegative")
        self.probs = probs
        if self.table is None:
            self.table = _pb_forward(probs, self.n_max)

    def pmf(self, count: int) -> float:
        """P(total sum over all trials = count)."""
        return float(self.table[self.probs.size, count])


def _rejective_first_order(p: np.ndarray, n: int,
                           fwd: np.ndarray | None = None,
                           bwd: np.ndarray | None = None) -> np.ndarray:
    """Exact inclusion probabilities of the size-n conditional design.

    pi_i = p_i P(S_{-i} = n-1) / P(S = n), with the leave-one-out sum
    assembled from prefix and suffix PMF tables (additions of nonnegative
    terms only, so no catastrophic cancellation).
    """
    N = p.size
    if fwd is None:
        fwd = _pb_forward(p, n)
    if bwd is None:
        bwd = _pb_forward(p[::-1], n)
    total = fwd[N, n]
    if total <= 0.0:
        raise DegenerateDesignError(f"P(sample size = {n}) is zero")
    pi = np.empty(N)
    for i in range(N):
        pref = fwd[i, :n]
        suff = bwd[N - 1 - i, :n][::-1]
        pi[i] = p[i] * float(np.dot(pref, suff)) / total
    return pi


MAX_PAIRWISE_UNITS = 2000


def _rejective_second_order(p: np.ndarray, n: int, pi: np.ndarray) -> np.ndarray:
    """Exact pairwise inclusion probabilities of the size-n conditional design.

    For each unit i the dynamic program is rebuilt on the remaining units;
    splitting that reduced sequence at unit j gives P(S_{-i,-j} = n-2) in
    one dot product.  Cost O(N^2 n), guarded for moderate N.
    """
    N = p.size
    if N > MAX_PAIRWISE_UNITS:
        raise CapacityError(
            f"pairwise probabilities for the size-constrained design are "
            f"O(N^2 n); limited to N <= {MAX_PAIRWISE_UNITS}, got {N}")
    fwd_all = _pb_forward(p, n)
    total = fwd_all[N, n]
    if total <= 0.0:
        raise DegenerateDesignError(f"P(sample size = {n}) is zero")
    pi2 = np.zeros((N, N))
    if n >= 2:
        for i in range(N):
            rest = np.delete(p, i)
            fwd = _pb_forward(rest, n - 1)
            bwd = _pb_forward(rest[::-1], n - 1)
            m = N - 1
            for r in range(m):
                j = r if r < i else r + 1
                if j <= i:
                    continue
                pref = fwd[r, : n - 1]
                suff = bwd[m - 1 - r, : n - 1][::-1]
                val = p[i] * p[j] * float(np.dot(pref, suff)) / total
                pi2[i, j] = pi2[j, i] = val
    np.fill_diagonal(pi2, pi)
    return pi2


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Design:
    """A single-stage sampling design on a population of ``N`` units.

    Use the factory functions :func:`srswor`, :func:`bernoulli`,
    :func:`poisson` and :func:`rejective`; instances are treated as
    immutable after construction.
    """

    kind: str
    N: int
    size: int | None = None           # fixed sample size (srswor, rejective)
    rate: float | None = None         # common inclusion probability (bernoulli)
    pi: np.ndarray | None = None      # per-unit inclusion probabilities (poisson)
    working_p: np.ndarray | None = None  # working probabilities (rejective)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError("population size must be at least 1")
        if self.kind == "srswor":
            if self.size is None or not 1 <= self.size <= self.N:
                raise ParameterError(f"srswor needs 1 <= n <= N, got n={self.size}, N={self.N}")
        elif self.kind == "bernoulli":
            if self.rate is None or not 0.0 < self.rate < 1.0:
                raise ParameterError(f"bernoulli rate must lie in (0, 1), got {self.rate}")
        elif self.kind == "poisson":
            pi = np.asarray(self.pi, dtype=float)
            if pi.shape != (self.N,):
                raise ParameterError("poisson needs one probability per unit")
            if np.any((pi <= 0.0) | (pi > 1.0)):
                raise ParameterError("poisson probabilities must lie in (0, 1]")
            pi.setflags(write=False)
            self.pi = pi
        elif self.kind == "rejective":
            p = np.asarray(self.working_p, dtype=float)
            if p.shape != (self.N,):
                raise ParameterError("rejective needs one working probability per unit")
            if np.any((p <= 0.0) | (p >= 1.0)):
                raise ParameterError("rejective working probabilities must lie strictly in (0, 1)")
            if self.size is None or not 1 <= self.size <= self.N - 1:
                raise ParameterError(f"rejective needs 1 <= n <= N-1, got n={self.size}, N={self.N}")
            p.setflags(write=False)
            self.working_p = p
        else:
            raise ParameterError(f"unknown design kind {self.kind!r}")

    @property
    def expected_size(self) -> float:
        """Design expectation of the sample size."""
        if self.kind in ("srswor", "rejective"):
            return float(self.size)
        if self.kind == "bernoulli":
            return self.N * self.rate
        return float(np.sum(self.pi))

    def _suffix_table(self) -> np.ndarray:
        """Suffix PMF rows for the sequential rejective sampler (cached)."""
        tab = self._cache.get("suffix")
        if tab is None:
            tab = _pb_forward(self.working_p[::-1], self.size)
            self._cache["suffix"] = tab
        return tab


def srswor(N: int, n: int) -> Design:
    """Simple random sampling without replacement of fixed size n."""
    return Design(kind="srswor", N=N, size=n)


def bernoulli(N: int, p: float) -> Design:
    """Independent inclusion of every unit with common probability p."""
    return Design(kind="bernoulli", N=N, rate=p)


def poisson(pi) -> Design:
    """Independent inclusion of unit i with probability pi[i]."""
    pi = np.asarray(pi, dtype=float)
    return Design(kind="poisson", N=pi.size, pi=pi)


def rejective(p, n: int) -> Design:
    """Conditional Poisson sampling: Poisson with working probabilities p,
    conditioned on the realized size equaling n."""
    p = np.asarray(p, dtype=float)
    return Design(kind="rejective", N=p.size, size=n, working_p=p)


@dataclass(eq=False)
class SampleDraw:
    """One realized sample.

    ``indicators`` is the full-length inclusion vector, ``included`` the
    sampled indices, ``pi_included`` their first-order inclusion
    probabilities and ``expected_n`` the design-expected sample size.
    ``y_included`` optionally carries the response values of the sampled
    units so estimators can work from the draw alone.
    """

    indicators: np.ndarray
    included: np.ndarray
    pi_included: np.ndarray
    expected_n: float
    y_included: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.included.size)

    def n_hat(self) -> float:
        """Inverse-probability estimate of the population size."""
        return float(np.sum(1.0 / self.pi_included))

    def with_values(self, y) -> "SampleDraw":
        """Attach the response values of the included units."""
        y = np.asarray(y, dtype=float)
        return replace(self, y_included=y[self.included])


# ---------------------------------------------------------------------------
# Inclusion probabilities
# ---------------------------------------------------------------------------

def first_order_pi(design: Design) -> np.ndarray:
    """Exact first-order inclusion probabilities (cached on the design)."""
    pi = design._cache.get("pi")
    if pi is not None:
        return pi
    if design.kind == "srswor":
        pi = np.full(design.N, design.size / design.N)
    elif design.kind == "bernoulli":
        pi = np.full(design.N, design.rate)
    elif design.kind == "poisson":
        pi = design.pi.copy()
    else:
        pi = _rejective_first_order(design.working_p, design.size)
    pi.setflags(write=False)
    design._cache["pi"] = pi
    return pi


def second_order_pi(design: Design) -> np.ndarray:
    """Exact pairwise inclusion probabilities, diagonal pi_ii = pi_i."""
    N = design.N
    pi = first_order_pi(design)
    if design.kind == "srswor":
        n = design.size
        off = n * (n - 1) / (N * (N - 1)) if N > 1 else 0.0
        pi2 = np.full((N, N), off)
    elif design.kind in ("bernoulli", "poisson"):
        pi2 = np.outer(pi, pi)
    else:
        return _rejective_second_order(design.working_p, design.size, pi)
    np.fill_diagonal(pi2, pi)
    return pi2


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def draw(design: Design, rng, y=None) -> SampleDraw:
    """Draw one sample from the design.

    ``rng`` is a numpy Generator (or a seed for one); the caller owns the
    stream, so replications can run concurrently without coordination.
    The rejective sampler is sequential and exact: walking units left to
    right, unit i enters with probability p_i P(suffix fills m-1) /
    P(suffix fills m) where m is the number of slots still open, which
    reproduces the conditional law with exactly n inclusions.
    """
    rng = _as_generator(rng)
    N = design.N
    if design.kind == "srswor":
        idx = rng.choice(N, size=design.size, replace=False)
        indicators = np.zeros(N, dtype=bool)
        indicators[idx] = True
    elif design.kind == "bernoulli":
        indicators = rng.random(N) < design.rate
    elif design.kind == "poisson":
        indicators = rng.random(N) < design.pi
    else:
        indicators = _sequential_rejective(design, rng)
    return _finish_draw(design, indicators, y)


def _sequential_rejective(design: Design, rng: np.random.Generator) -> np.ndarray:
    p = design.working_p
    N, n = design.N, design.size
    suffix = design._suffix_table()
    us = rng.random(N)
    indicators = np.zeros(N, dtype=bool)
    m = n
    for i in range(N):
        if m == 0:
            break
        remaining = N - i
        if remaining == m:
            indicators[i:] = True
            m = 0
            break
        denom = suffix[remaining, m]
        pr = p[i] * suffix[remaining - 1, m - 1] / denom
        if us[i] < pr:
            indicators[i] = True
            m -= 1
    return indicators


def rejection_draw(design: Design, rng, y=None, max_attempts: int = 1_000_000) -> SampleDraw:
    """Rejective draw by redrawing Poisson samples until the size is n.

    Slow when P(size = n) is small; kept as an independent cross-check of
    the sequential sampler.
    """
    if design.kind != "rejective":
        raise ParameterError("rejection_draw applies to rejective designs only")
    rng = _as_generator(rng)
    p = design.working_p
    for _ in range(max_attempts):
        indicators = rng.random(design.N) < p
        if int(indicators.sum()) == design.size:
            return _finish_draw(design, indicators, y)
    raise DegenerateDesignError(f"no size-{design.size} sample in {max_attempts} attempts")


def _finish_draw(design: Design, indicators: np.ndarray, y) -> SampleDraw:
    included = np.flatnonzero(indicators)
    pi = first_order_pi(design)
    sample = SampleDraw(
        indicators=indicators,
        included=included,
        pi_included=pi[included],
        expected_n=design.expected_size,
    )
    if y is not None:
        sample = sample.with_values(y)
    return sample


# ---------------------------------------------------------------------------
# Calibration and design constants
# ---------------------------------------------------------------------------

def _renormalize_odds(odds: np.ndarray, n: int) -> np.ndarray:
    """Scale the odds vector so the implied p sums to n (sum c*o/(1+c*o) = n)."""

    def gap(log_c):
        co = np.exp(log_c) * odds
        return float(np.sum(co / (1.0 + co))) - n

    lo, hi = -1.0, 1.0
    while gap(lo) > 0.0:
        lo -= 8.0
    while gap(hi) < 0.0:
        hi += 8.0
    log_c = brentq(gap, lo, hi, xtol=1e-14)
    co = np.exp(log_c) * odds
    return np.clip(co / (1.0 + co), _P_CLIP, 1.0 - _P_CLIP)


def calibrate_rejective_p(target_pi, n: int, tol: float = 1e-10,
                          max_iter: int = 1000) -> np.ndarray:
    """Find working probabilities whose size-n conditional design has the
    given first-order inclusion probabilities.

    Damped multiplicative fixed point: p <- p * target / pi(p) in odds
    space, renormalized each step so sum(p) = n; the step is halved (in
    log scale) whenever the max-norm residual grows.  Such a p always
    exists and is unique up to a common odds factor.
    """
    t = np.asarray(target_pi, dtype=float)
    N = t.size
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise ParameterError("target inclusion probabilities must lie strictly in (0, 1)")
    if not 1 <= n <= N - 1:
        raise ParameterError(f"need 1 <= n <= N-1, got n={n}, N={N}")
    if abs(float(t.sum()) - n) > 1e-9:
        raise ParameterError(
            f"target inclusion probabilities must sum to n={n}, got {t.sum():.12g}")
    p = t.copy()
    prev_resid = np.inf
    resid = np.inf
    for _ in range(max_iter):
        pi = _rejective_first_order(p, n)
        resid = float(np.max(np.abs(pi - t)))
        if resid <= tol:
            return p
        update = t / pi
        if resid > prev_resid:
            update = np.sqrt(update)
        prev_resid = resid
        odds = (p / (1.0 - p)) * update
        p = _renormalize_odds(odds, n)
    raise CalibrationError(
        f"calibration stopped after {max_iter} iterations with residual {resid:.3e}",
        residual=resid, iterations=max_iter)


def design_constants(design: Design) -> DesignConstants:
    """Exact finite-N values of the covariance constants for this design.

    lam = n/N and mu1 = (n/N^2) sum(1/pi - 1) for every design; mu2 is
    lam - 1 for srswor (an exact finite-N identity), zero for the
    independent designs, and for rejective designs the leading term
    -(n/N^2) sum_{i != j} (1-pi_i)(1-pi_j) / d of the pairwise ratio
    expansion, with d = sum pi(1-pi).
    """
    pi = first_order_pi(design)
    N = design.N
    n = design.expected_size
    lam = n / N
    mu1 = (n / N**2) * float(np.sum(1.0 / pi - 1.0))
    d = float(np.sum(pi * (1.0 - pi)))
    if design.kind == "srswor":
        mu2 = lam - 1.0
    elif design.kind in ("bernoulli", "poisson"):
        mu2 = 0.0
    else:
        q = 1.0 - pi
        if d <= 0.0:
            raise DegenerateDesignError("entropy scale d is zero")
        mu2 = -(n / (N**2 * d)) * (float(q.sum()) ** 2 - float(np.sum(q * q)))
    return DesignConstants(lam=lam, mu1=mu1, mu2=mu2, d=d)
