"""The unsmoothed GPY weights and the empirical range experiments built on them."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .arith import (
    ResourceError,
    DEFAULT_MAX_ENTRIES,
    is_prime,
    mobius,
    prime_factors,
    primes_up_to,
    squarefree_products,
    stable_sum,
    window_log_weights,
)
from .tuples import AdmissibleTuple, is_admissible, residues_mod, singular_series

__all__ = [
    "SieveParams",
    "RangeReport",
    "MainTermInapplicable",
    "lambda_r",
    "big_lambda_r",
    "range_weights",
    "class_sum_array",
    "varpi",
    "theta_star",
    "e_star",
    "bv_sum",
    "lemma1_main_term",
    "lemma2_main_term",
    "lemma1_report",
    "lemma2_report",
    "gpy_factor",
    "optimize_kl",
]


class MainTermInapplicable(UserWarning):
    """``y/phi(q)`` is not the expected size of a non-reduced progression."""


@dataclass(frozen=True)
class SieveParams:
    N: int
    R: float
    k: int
    ell: int
    theta: float = 0.5
    C: float | None = None
    C0: float | None = None

    def __post_init__(self):
        if not 1 <= self.ell <= self.k:
            raise ValueError(f"need 1 <= ell <= k, got ell={self.ell}, k={self.k}")
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")

    def check_tuple(self, tup: AdmissibleTuple) -> None:
        if tup.k != self.k:
            raise ValueError(f"params.k={self.k} but the tuple has {tup.k} elements")


@dataclass
class RangeReport:
    empirical: float
    main_term: float
    n_range: tuple[int, int]
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.main_term == 0:
            return math.nan
        return self.empirical / self.main_term

    def as_dict(self) -> dict[str, Any]:
        return {
            "empirical": self.empirical,
            "main_term": self.main_term,
            "ratio": self.ratio,
            "n_range": list(self.n_range),
            "notes": self.notes,
        }


def lambda_r(d: int, params: SieveParams) -> float:
    if d < 1 or d > params.R:
        return 0.0
    mu = mobius(d)
    if mu == 0:
        return 0.0
    m = params.k + params.ell
    return mu * math.log(params.R / d) ** m / math.factorial(m)


def big_lambda_r(n: int, tup: AdmissibleTuple, params: SieveParams) -> float:
    """``Lambda_R(n)``: sum of ``lambda_R(d)`` over square-free ``d <= R`` dividing ``prod(n + h)``."""
    hit = [int(p) for p in primes_up_to(int(params.R)) if any((n + h) % p == 0 for h in tup.elements)]
    return math.fsum(lambda_r(d, params) for d, _ in squarefree_products(hit, params.R))


def _moduli(tup: AdmissibleTuple, R: float) -> list[tuple[int, tuple[int, ...], list[int]]]:
    out = []
    for d, fac in squarefree_products(primes_up_to(int(R)).tolist(), R):
        out.append((d, fac, residues_mod(tup, fac)))
    return out


def _block_bounds(N: int) -> list[tuple[int, int]]:
    # fixed-size blocks so the merge order never depends on ``jobs``
    size = 1 << 20
    return [(lo, min(lo + size, 2 * N)) for lo in range(N, 2 * N, size)]


def range_weights(
    tup: AdmissibleTuple,
    params: SieveParams,
    membership: AdmissibleTuple | None = None,
    jobs: int = 1,
    max_entries: int | None = None,
) -> np.ndarray:
    """``Lambda_R(n)`` for every ``n`` in ``(N, 2N]`` by marking residue classes.

    ``membership`` replaces the tuple in the divisibility condition while the
    coefficients keep using ``tup`` (used for the prime-twisted identity).
    """
    N = params.N
    cap = DEFAULT_MAX_ENTRIES if max_entries is None else max_entries
    if N > cap:
        raise ResourceError(f"range of {N} entries exceeds budget {cap}")
    mem = tup if membership is None else membership
    mods = [(d, lambda_r(d, params), res) for d, _, res in _moduli(mem, params.R)]
    return class_sum_array(N, mods, jobs)


def class_sum_array(N: int, mods, jobs: int = 1) -> np.ndarray:
    """Array over ``(N, 2N]`` holding, at ``n``, the sum of ``w`` over ``(d, w, residues)`` with ``n mod d`` in ``residues``."""
    out = np.zeros(N, dtype=np.float64)

    def fill(bounds):
        lo, hi = bounds
        view = out[lo - N : hi - N]
        for d, w, res in mods:
            for r in res:
                view[(r - (lo + 1)) % d :: d] += w

    blocks = _block_bounds(N)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            list(ex.map(fill, blocks))
    else:
        for b in blocks:
            fill(b)
    return out


def varpi(n: int) -> float:
    return math.log(n) if is_prime(n) else 0.0


def _totient(q: int) -> int:
    return math.prod(p ** (e - 1) * (p - 1) for p, e in prime_factors(q))


def theta_star(y: float, a: int, q: int) -> float:
    """Sum of ``log p`` over primes ``y < p <= 2y`` with ``p = a (mod q)``."""
    ps = primes_up_to(int(math.floor(2 * y)))
    ps = ps[ps > y]
    sel = ps[ps % q == a % q]
    return math.fsum(np.log(sel.astype(np.float64)).tolist())


def e_star(y: float, a: int, q: int) -> float:
    if math.gcd(a, q) != 1:
        warnings.warn(f"gcd({a}, {q}) > 1: main term y/phi(q) does not apply", MainTermInapplicable)
    return theta_star(y, a, q) - y / _totient(q)


def _class_extremes(ps: np.ndarray, logs: np.ndarray, phi: int, ys: np.ndarray, exact: bool, x: float) -> float:
    cum = np.concatenate(([0.0], np.cumsum(logs)))
    vals = cum[np.searchsorted(ps, 2 * ys, side="right")] - cum[np.searchsorted(ps, ys, side="right")]
    best = float(np.max(np.abs(vals - ys / phi))) if ys.size else 0.0
    if exact and ps.size:
        # E is piecewise linear with jumps at p and p/2: check both one-sided limits
        bps = np.concatenate((ps[ps <= x], ps[ps <= 2 * x] / 2.0)).astype(np.float64)
        right = cum[np.searchsorted(ps, 2 * bps, side="right")] - cum[np.searchsorted(ps, bps, side="right")]
        left = cum[np.searchsorted(ps, 2 * bps, side="left")] - cum[np.searchsorted(ps, bps, side="left")]
        best = max(best, float(np.max(np.abs(right - bps / phi))), float(np.max(np.abs(left - bps / phi))))
    return best


def bv_sum(x: float, theta: float, grid: int = 200, exact: bool = False, max_moduli: int = 20_000) -> float:
    """``sum_{q <= x^theta} max_{(a,q)=1} max_{y <= x} |E*(y; a, q)|``.

    By default the inner maximum runs over a geometric grid of ``grid``
    points in ``[1, x]``, which only bounds it from below. With ``exact``
    both one-sided limits at every jump of ``theta*`` are examined as well;
    since ``E*`` is linear in between, that gives the true supremum.
    """
    if x < 2:
        raise ValueError("x must be at least 2")
    Q = int(math.floor(x**theta + 1e-9))
    if Q > max_moduli:
        raise ResourceError(f"{Q} moduli exceeds budget {max_moduli}")
    ps = primes_up_to(int(2 * x)).astype(np.int64)
    logs = np.log(ps.astype(np.float64))
    ys = np.geomspace(1.0, x, grid)
    total = []
    for q in range(1, Q + 1):
        phi = _totient(q)
        res = ps % q
        best = 0.0
        for a in range(q):
            if math.gcd(a, q) != 1:
                continue
            sel = res == a
            best = max(best, _class_extremes(ps[sel], logs[sel], phi, ys, exact, x))
        total.append(best)
    return math.fsum(total)


def lemma1_main_term(series: float, k: int, ell: int, N: int, R: float) -> float:
    return series / math.factorial(k + 2 * ell) * math.comb(2 * ell, ell) * N * math.log(R) ** (k + 2 * ell)


def lemma2_main_term(series: float, k: int, ell: int, N: int, R: float) -> float:
    m = k + 2 * ell + 1
    return series / math.factorial(m) * math.comb(2 * ell + 2, ell + 1) * N * math.log(R) ** m


def lemma1_report(tup: AdmissibleTuple, params: SieveParams, jobs: int = 1, cutoff: int = 10**6) -> RangeReport:
    params.check_tuple(tup)
    N = params.N
    if not is_admissible(tup):
        return RangeReport(math.nan, 0.0, (N, 2 * N), {"admissible": False})
    lam = range_weights(tup, params, jobs=jobs)
    series = singular_series(tup, cutoff).value
    main = lemma1_main_term(series, tup.k, params.ell, N, params.R)
    return RangeReport(
        stable_sum(lam * lam),
        main,
        (N, 2 * N),
        {"admissible": True, "singular_series": series, "route": "range_weights"},
    )


def lemma2_report(
    tup: AdmissibleTuple,
    params: SieveParams,
    h: int,
    jobs: int = 1,
    cutoff: int = 10**6,
    membership: AdmissibleTuple | None = None,
) -> RangeReport:
    """Prime-twisted sum ``sum varpi(n + h) Lambda_R(n)^2`` against its main term.

    Only ``h`` in the tuple is supported.
    """
    if h not in tup.elements:
        raise ValueError(f"h={h} must be an element of the tuple {tup.elements}")
    params.check_tuple(tup)
    N = params.N
    if not is_admissible(tup):
        return RangeReport(math.nan, 0.0, (N, 2 * N), {"admissible": False})
    lam = range_weights(tup, params, membership=membership, jobs=jobs)
    pw = window_log_weights(N + h, 2 * N + h)
    series = singular_series(tup, cutoff).value
    main = lemma2_main_term(series, tup.k, params.ell, N, params.R)
    return RangeReport(
        stable_sum(pw * lam * lam),
        main,
        (N, 2 * N),
        {"admissible": True, "singular_series": series, "h": h, "route": "range_weights"},
    )


def gpy_factor(k: int, ell: int, theta) -> Fraction | float:
    """The last factor of the GPY positivity criterion.

    Exact rational arithmetic unless ``theta`` is a float.
    """
    if not 1 <= ell <= k:
        raise ValueError("need 1 <= ell <= k")
    if isinstance(theta, float):
        return k / (k + 2 * ell + 1) * 2 * (2 * ell + 1) / (ell + 1) * theta / 2 - 1
    t = Fraction(theta)
    if not 0 < t <= 1:
        raise ValueError("theta must lie in (0, 1]")
    return Fraction(k, k + 2 * ell + 1) * Fraction(2 * (2 * ell + 1), ell + 1) * t / 2 - 1


def optimize_kl(theta, k_max: int) -> tuple[int, int, Fraction]:
    """Maximise :func:`gpy_factor` over ``1 <= ell <= k <= k_max``.

    For fixed ``ell`` the factor strictly increases with ``k``, so the
    optimum sits at ``k = k_max``; only ``ell`` is scanned. Ties go to the
    smallest ``ell``.
    """
    if k_max < 1:
        raise ValueError("k_max must be positive")
    t = Fraction(str(theta)) if isinstance(theta, float) else Fraction(theta)
    best = None
    for ell in range(1, k_max + 1):
        f = gpy_factor(k_max, ell, t)
        if best is None or f > best[2]:
            best = (k_max, ell, f)
    return best
