"""Exact design-measure computations by enumeration for small populations.

Enumerating the full support of a design gives exact inclusion
probabilities to any order, centered correlation moments, the exact
design variance of the inverse-probability mean, finite-N covariance
matrices on grids, and the Kullback-Leibler divergence between two
designs.  These serve as independent oracles for the dynamic-program
routes in :mod:`svycdf.designs` and as numeric reports for the
correlation and entropy statistics that control the asymptotics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import designs as dsg
from . import population as pop
from .errors import CapacityError, ParameterError

MAX_FIXED_SIZE_SUPPORT = 2_000_000
MAX_RANDOM_SIZE_UNITS = 20
MAX_HIGH_ORDER_UNITS = 14   # third/fourth order tensor sweeps

_CHUNK = 1 << 14


@dataclass(eq=False)
class EnumeratedDesign:
    """Full support of a design: one boolean row per sample, with its mass."""

    samples: np.ndarray     # (S, N) bool
    probs: np.ndarray       # (S,)
    N: int

    def __post_init__(self):
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-12 or np.any(self.probs < 0.0):
            raise ParameterError("support probabilities must be nonnegative and sum to one")

    @property
    def support_size(self) -> int:
        return int(self.probs.size)

    def first_order(self) -> np.ndarray:
        return self.probs @ self.samples

    def second_order(self) -> np.ndarray:
        weighted = self.samples * self.probs[:, None]
        return weighted.T @ self.samples

    def third_order(self) -> np.ndarray:
        if self.N > MAX_HIGH_ORDER_UNITS:
            raise CapacityError(f"third-order sweep limited to N <= {MAX_HIGH_ORDER_UNITS}")
        s = self.samples.astype(float)
        return np.einsum("s,si,sj,sk->ijk", self.probs, s, s, s, optimize=True)


def _fixed_size_masks(N: int, n: int) -> np.ndarray:
    count = math.comb(N, n)
    if count > MAX_FIXED_SIZE_SUPPORT:
        raise CapacityError(
            f"C({N},{n}) = {count} samples exceeds the guard {MAX_FIXED_SIZE_SUPPORT}")
    masks = np.zeros((count, N), dtype=bool)
    for row, combo in enumerate(itertools.combinations(range(N), n)):
        masks[row, combo] = True
    return masks


def _all_subsets_masks(N: int) -> np.ndarray:
    if N > MAX_RANDOM_SIZE_UNITS:
        raise CapacityError(
            f"random-size enumeration limited to N <= {MAX_RANDOM_SIZE_UNITS}, got {N}")
    counts = np.arange(2 ** N, dtype=np.int64)
    return ((counts[:, None] >> np.arange(N)) & 1).astype(bool)


def _independent_probs(masks: np.ndarray, pi: np.ndarray) -> np.ndarray:
    probs = np.empty(masks.shape[0])
    for start in range(0, masks.shape[0], _CHUNK):
        block = masks[start:start + _CHUNK]
        probs[start:start + _CHUNK] = np.prod(np.where(block, pi, 1.0 - pi), axis=1)
    return probs


def enumerate_design(design: dsg.Design) -> EnumeratedDesign:
    """Exact support and probabilities of a design.

    Fixed-size designs are guarded by the number of size-n subsets,
    random-size designs by the number of units.
    """
    N = design.N
    if design.kind == "srswor":
        masks = _fixed_size_masks(N, design.size)
        probs = np.full(masks.shape[0], 1.0 / masks.shape[0])
    elif design.kind == "rejective":
        masks = _fixed_size_masks(N, design.size)
        p = design.working_p
        log_odds = np.log(p) - np.log1p(-p)
        log_mass = masks @ log_odds
        mass = np.exp(log_mass - log_mass.max())
        probs = mass / mass.sum()
    elif design.kind == "bernoulli":
        masks = _all_subsets_masks(N)
        probs = _independent_probs(masks, np.full(N, design.rate))
    else:
        masks = _all_subsets_masks(N)
        probs = _independent_probs(masks, design.pi)
    return EnumeratedDesign(samples=masks, probs=probs, N=N)


def exact_moment(enumerated: EnumeratedDesign, indices) -> float:
    """E prod_{i in indices} (xi_i - pi_i), computed over the full support."""
    idx = tuple(int(i) for i in indices)
    if not 2 <= len(idx) <= 4:
        raise ParameterError("moment order must be between 2 and 4")
    if len(set(idx)) != len(idx):
        raise ParameterError(f"indices must be distinct, got {idx}")
    if min(idx) < 0 or max(idx) >= enumerated.N:
        raise ParameterError(f"indices out of range for N={enumerated.N}")
    pi = enumerated.first_order()
    centered = enumerated.samples[:, idx].astype(float) - pi[list(idx)]
    return float(np.dot(enumerated.probs, np.prod(centered, axis=1)))


@dataclass(frozen=True)
class ConditionEntry:
    """One reported statistic: its value, the bound it feeds, and the
    constant that would make the bound tight at this N."""

    statistic: float
    bound_form: str
    implied_constant: float


@dataclass(eq=False)
class ConditionReport:
    """Numeric report on the correlation and entropy statistics of a design.

    The underlying requirements are asymptotic, so a single finite N can
    only exhibit numbers, never a verdict; each entry reports the exact
    statistic and the constant it implies.
    """

    entries: dict[str, ConditionEntry]
    N: int
    n: float

    def __getitem__(self, key: str) -> ConditionEntry:
        return self.entries[key]


def check_conditions(enumerated: EnumeratedDesign, n: float | None = None) -> ConditionReport:
    """Exact finite-N statistics behind the correlation and entropy bounds.

    Reports max centered correlations of orders 2-4 with their implied
    constants, the averaged ratio sums (row-sum pair form, triple form,
    and the signed and absolute fourth-order centered sums), the scaled
    inclusion-probability range, and the entropy-scale ratios.  For
    rejective designs the residual of the pairwise-ratio expansion is
    added.  Third and fourth order sweeps require N <= 14.
    """
    N = enumerated.N
    if N > MAX_HIGH_ORDER_UNITS:
        raise CapacityError(f"condition sweep limited to N <= {MAX_HIGH_ORDER_UNITS}")
    pi = enumerated.first_order()
    if n is None:
        n = float(pi.sum())
    if n <= 0:
        raise ParameterError("expected size must be positive")
    entries: dict[str, ConditionEntry] = {}

    ratio_scaled = N * pi / n
    entries["inclusion_ratio_min"] = ConditionEntry(
        float(ratio_scaled.min()), "K1 <= N*pi/n", float(ratio_scaled.min()))
    entries["inclusion_ratio_max"] = ConditionEntry(
        float(ratio_scaled.max()), "N*pi/n <= K2", float(ratio_scaled.max()))

    probs = enumerated.probs
    x = enumerated.samples.astype(float) - pi
    pair = x.T @ (x * probs[:, None])          # E (xi_i - pi_i)(xi_j - pi_j)
    off = ~np.eye(N, dtype=bool)
    max_pair = float(np.abs(pair[off]).max()) if N > 1 else 0.0
    entries["max_pair_correlation"] = ConditionEntry(
        max_pair, "|E prod| < K n/N^2", max_pair * N**2 / n)

    triple = np.einsum("s,si,sj,sk->ijk", probs, x, x, x, optimize=True)
    quad = np.einsum("s,si,sj,sk,sl->ijkl", probs, x, x, x, x, optimize=True)
    d3 = _distinct_mask(N, 3)
    d4 = _distinct_mask(N, 4)
    max_triple = float(np.abs(triple[d3]).max()) if d3.any() else 0.0
    max_quad = float(np.abs(quad[d4]).max()) if d4.any() else 0.0
    entries["max_triple_correlation"] = ConditionEntry(
        max_triple, "|E prod| < K n^2/N^3", max_triple * N**3 / n**2)
    entries["max_quad_correlation"] = ConditionEntry(
        max_quad, "|E prod| < K n^2/N^4", max_quad * N**4 / n**2)

    pi2 = enumerated.second_order()
    ratio = (pi2 - np.outer(pi, pi)) / np.outer(pi, pi)
    np.fill_diagonal(ratio, 0.0)
    rowsum = float(np.abs(ratio).sum(axis=0).max()) * n / N if N > 1 else 0.0
    entries["pair_ratio_rowsum"] = ConditionEntry(rowsum, "(n/N) sum_i |ratio_ij| <= K", rowsum)

    s_float = enumerated.samples.astype(float)
    pi3 = np.einsum("s,si,sj,sk->ijk", probs, s_float, s_float, s_float, optimize=True)
    outer3 = pi[:, None, None] * pi[None, :, None] * pi[None, None, :]
    triple_ratio = np.abs((pi3 - outer3) / outer3)[d3].sum() * n / N**3
    entries["triple_ratio_sum"] = ConditionEntry(
        float(triple_ratio), "(n/N^3) sum |ratio_ijk| <= K", float(triple_ratio))

    outer1 = pi[:, None, None, None] * pi[None, :, None, None] \
        * pi[None, None, :, None] * pi[None, None, None, :]
    quad_terms = quad / outer1
    signed = float(quad_terms[d4].sum()) * n**2 / N**4
    absolute = float(np.abs(quad_terms[d4]).sum()) * n**2 / N**4
    entries["quad_centered_sum_signed"] = ConditionEntry(
        abs(signed), "(n^2/N^4) |sum E prod / pi^4| <= K", abs(signed))
    entries["quad_centered_sum_absolute"] = ConditionEntry(
        absolute, "(n^2/N^4) sum |E prod| / pi^4 <= K", absolute)

    d = float(np.sum(pi * (1.0 - pi)))
    entries["entropy_scale"] = ConditionEntry(d, "d -> infinity", d)
    if d > 0.0:
        entries["size_over_entropy"] = ConditionEntry(n / d, "n/d = O(1)", n / d)
        entries["pop_over_entropy_sq"] = ConditionEntry(N / d**2, "N/d^2 -> 0", N / d**2)
        entries["popsq_over_size_entropy"] = ConditionEntry(
            N**2 / (n * d), "N^2/(n d) = O(1)", N**2 / (n * d))
        entries["hajek_variance_factor"] = ConditionEntry(
            n * (N - n) ** 2 / (N**2 * d), "n(N-n)^2/(N^2 d) -> limit",
            n * (N - n) ** 2 / (N**2 * d))
        resid = np.abs((pi2 - np.outer(pi, pi))
                       + np.outer(pi, pi) * np.outer(1.0 - pi, 1.0 - pi) / d)
        np.fill_diagonal(resid, 0.0)
        max_resid = float(resid.max()) if N > 1 else 0.0
        entries["pair_expansion_residual"] = ConditionEntry(
            max_resid, "|ratio + (1-pi_i)(1-pi_j)/d| <= C/d^2", max_resid * d**2)
    return ConditionReport(entries=entries, N=N, n=float(n))


def _distinct_mask(N: int, order: int) -> np.ndarray:
    """Boolean tensor selecting index tuples with all entries distinct."""
    idx = np.indices((N,) * order)
    mask = np.ones((N,) * order, dtype=bool)
    for a in range(order):
        for b in range(a + 1, order):
            mask &= idx[a] != idx[b]
    return mask


def _pi_matrices(design_or_enum):
    if isinstance(design_or_enum, EnumeratedDesign):
        return design_or_enum.first_order(), design_or_enum.second_order(), design_or_enum.N
    design = design_or_enum
    return dsg.first_order_pi(design), None, design.N


def exact_sn2(design_or_enum, v) -> float:
    """Exact design variance of the inverse-probability mean of v.

    (1/N^2) sum_ij ((pi_ij - pi_i pi_j)/(pi_i pi_j)) v_i v_j, evaluated
    with exact pairwise probabilities.  Product designs avoid the N x N
    matrix; srswor uses its constant off-diagonal ratio.
    """
    v = np.asarray(v, dtype=float)
    pi, pi2, N = _pi_matrices(design_or_enum)
    if v.shape != (N,):
        raise ParameterError("v must have one entry per unit")
    if pi2 is not None:
        ratio = (pi2 - np.outer(pi, pi)) / np.outer(pi, pi)
        return float(v @ ratio @ v) / N**2
    design = design_or_enum
    diag = float(np.sum((1.0 - pi) / pi * v * v))
    if design.kind in ("bernoulli", "poisson"):
        return diag / N**2
    if design.kind == "srswor":
        n = design.size
        if N == 1:
            return 0.0
        c = (n - N) / (n * (N - 1))
        total = float(v.sum())
        return (diag + c * (total * total - float(np.sum(v * v)))) / N**2
    pi2 = dsg.second_order_pi(design)
    ratio = (pi2 - np.outer(pi, pi)) / np.outer(pi, pi)
    return float(v @ ratio @ v) / N**2


def sigma_matrix(design: dsg.Design, population: pop.Population, grid,
                 form: Literal["HT2", "HJ2"] = "HT2",
                 law: pop.SuperPopulationLaw | None = None) -> np.ndarray:
    """Finite-N covariance matrix of the standardized weighted CDF on a grid.

    (n/N^2) sum_ij ((pi_ij - pi_i pi_j)/(pi_i pi_j)) a_i a_j^T with
    a_i the vector of response indicators 1{y_i <= t_k} ("HT2") or the
    indicators centered by the model CDF ("HJ2", requires ``law``).
    """
    grid = np.asarray(grid, dtype=float)
    pi = dsg.first_order_pi(design)
    N = design.N
    n = design.expected_size
    a = (population.y[:, None] <= grid[None, :]).astype(float)
    if form == "HJ2":
        if law is None:
            raise ParameterError("centered form requires the super-population law")
        a = a - pop.true_cdf(law, grid)[None, :]
    elif form != "HT2":
        raise ParameterError(f"form must be 'HT2' or 'HJ2', got {form!r}")

    diag_ratio = (1.0 - pi) / pi
    diag_part = a.T @ (a * diag_ratio[:, None])
    if design.kind in ("bernoulli", "poisson"):
        mat = diag_part
    elif design.kind == "srswor":
        c = (design.size - N) / (design.size * (N - 1)) if N > 1 else 0.0
        col_sums = a.sum(axis=0)
        mat = diag_part + c * (np.outer(col_sums, col_sums) - a.T @ a)
    else:
        pi2 = dsg.second_order_pi(design)
        ratio = (pi2 - np.outer(pi, pi)) / np.outer(pi, pi)
        mat = a.T @ ratio @ a
    mat = mat * (n / N**2)
    return (mat + mat.T) / 2.0


def divergence_from_rejective(enumerated: EnumeratedDesign,
                              rejective_reference: EnumeratedDesign) -> float:
    """Kullback-Leibler divergence sum P(s) log(P(s)/R(s)).

    Returns ``inf`` when the first design puts mass outside the support
    of the reference.
    """
    if enumerated.N != rejective_reference.N:
        raise ParameterError("designs must share the population size")
    ref = {np.packbits(row).tobytes(): p
           for row, p in zip(rejective_reference.samples, rejective_reference.probs)}
    div = 0.0
    for row, p in zip(enumerated.samples, enumerated.probs):
        if p <= 0.0:
            continue
        r = ref.get(np.packbits(row).tobytes(), 0.0)
        if r <= 0.0:
            return float("inf")
        div += p * math.log(p / r)
    return max(div, 0.0)
