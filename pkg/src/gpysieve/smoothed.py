"""Smoothed GPY weights over the interval semigroup with a small-prime preweight.

The weights ``lambda~(D)`` live on elements of the semigroup generated by
intervals of size at most ``w = R^omega``. Primes below ``R0`` are handled
by a combinatorial preweight ``gamma(n) = sum rho(d)`` over ``d`` dividing
``prod(n + h)``, with ``rho`` the Brun truncation of the Moebius function.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any

import numpy as np

from .arith import primes_up_to, squarefree_products, stable_sum, window_log_weights
from .classic import (
    RangeReport,
    SieveParams,
    class_sum_array,
    lemma1_main_term,
    lemma2_main_term,
)
from .diagonal import WeightTable, quad_form_diagonal, quad_form_direct
from .semigroup import (
    Element,
    IntervalScheme,
    PrimeBuckets,
    delta,
    delta_star,
    enumerate_elements,
    mu,
    phi,
    phi_star,
)
from .tuples import AdmissibleTuple, is_admissible, residues_mod, singular_series, v_product, w_product

__all__ = [
    "SmoothParams",
    "ConstraintWarning",
    "RhoWeights",
    "StarredForm",
    "SmoothedSetup",
    "brun_depth",
    "build_rho",
    "gamma_weight",
    "gamma_range",
    "build_setup",
    "lambda_tilde",
    "lambda_tilde_bound",
    "big_lambda_tilde",
    "big_lambda_tilde_range",
    "lemma3_report",
    "buchstab_check",
    "t_star",
    "t_double_star",
    "k_sum_star",
    "lemma4_main_report",
    "rho_rows",
]


class ConstraintWarning(UserWarning):
    """An asymptotic side condition does not hold at the chosen parameters."""


@dataclass(frozen=True)
class SmoothParams:
    """``w = R^omega`` (or an explicit ``w``) and the preweight exponent ``tau``."""

    omega: float = 0.5
    tau: float = 2.0
    w: float | None = None
    strict: bool = False

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def w_for(self, R: float) -> float:
        return self.w if self.w is not None else R**self.omega

    def window_ok(self, k: int) -> bool:
        return 3 * math.log(k) <= k * self.omega <= k / 2

    def check_window(self, k: int) -> bool:
        ok = self.window_ok(k)
        if not ok:
            msg = f"omega={self.omega} is outside [3 log k / k, 1/2] for k={k}"
            if self.strict:
                raise ValueError(msg)
            warnings.warn(msg, ConstraintWarning)
        return ok


@dataclass(frozen=True)
class RhoWeights:
    R0: float
    tau: float
    truncation_depth: int
    primes: tuple[int, ...]
    support: dict[int, int] = field(compare=False)
    factors: dict[int, tuple[int, ...]] = field(compare=False, repr=False)

    def __call__(self, d: int) -> int:
        return self.support.get(d, 0)

    @property
    def complete(self) -> bool:
        """True when the truncation is the full inclusion-exclusion over ``primes``."""
        return self.truncation_depth >= len(self.primes)

    def mean(self, tup: AdmissibleTuple) -> float:
        """``sum rho(d) nu(d)/d``."""
        return math.fsum(
            r * math.prod((tup.nu(p) / p for p in self.factors[d]), start=1.0) for d, r in self.support.items()
        )

    def mean_star(self, tup: AdmissibleTuple) -> float:
        """``sum rho(d) nu*(d)/phi(d)`` with ``nu*(p) = nu(p) - 1``."""
        return math.fsum(
            r * math.prod(((tup.nu(p) - 1) / (p - 1) for p in self.factors[d]), start=1.0)
            for d, r in self.support.items()
        )


@dataclass
class StarredForm:
    value: float
    variant: str
    routes: dict[str, float] = field(default_factory=dict)


def brun_depth(R0: float, tau: float) -> int:
    """Largest ``m`` such that every product of ``2m`` primes below ``R0`` is below ``R0^tau``.

    Capped at full inclusion-exclusion. With this depth the size cut on the
    support never removes a term, so the truncation keeps its Bonferroni sign.
    """
    ps = sorted((int(p) for p in primes_up_to(math.ceil(R0) - 1) if p < R0), reverse=True)
    bound = R0**tau
    m = 0
    while 2 * m < len(ps):
        nxt = min(2 * m + 2, len(ps))
        if math.prod(ps[:nxt]) >= bound:
            break
        m += 1
    return min(2 * m, len(ps))


def build_rho(R0: float, tau: float, depth: int | None = None) -> RhoWeights:
    """Brun's even truncation: ``rho(d) = mu(d)`` on square-free ``d < R0^tau`` built from primes ``< R0`` with at most ``depth`` factors."""
    if R0 < 2:
        raise ValueError("R0 must be at least 2")
    ps = [int(p) for p in primes_up_to(math.ceil(R0) - 1) if p < R0]
    if depth is None:
        depth = brun_depth(R0, tau)
    else:
        if depth < 0 or depth % 2:
            raise ValueError("depth must be a non-negative even integer")
        if depth < len(ps) and math.prod(sorted(ps)[-depth:] if depth else [1]) >= R0**tau:
            warnings.warn(
                "the size cut removes terms at this depth; gamma >= 0 is no longer guaranteed",
                ConstraintWarning,
            )
    support, factors = {}, {}
    for d, fac in squarefree_products(ps, R0**tau, max_factors=depth):
        if d >= R0**tau:
            continue
        support[d] = -1 if len(fac) % 2 else 1
        factors[d] = fac
    return RhoWeights(float(R0), float(tau), depth, tuple(ps), support, factors)


def gamma_weight(n: int, tup: AdmissibleTuple, rho: RhoWeights) -> int:
    """``gamma(n) = sum rho(d)`` over ``d`` in the support dividing ``prod(n + h)``."""
    hit = {p for p in rho.primes if any((n + h) % p == 0 for h in tup.elements)}
    return sum(r for d, r in rho.support.items() if hit.issuperset(rho.factors[d]))


def gamma_range(N: int, tup: AdmissibleTuple, rho: RhoWeights, jobs: int = 1) -> np.ndarray:
    mods = [(d, float(r), residues_mod(tup, rho.factors[d])) for d, r in rho.support.items()]
    return class_sum_array(N, mods, jobs)


@dataclass
class SmoothedSetup:
    """Everything the smoothed sums share: parameters, scheme, buckets and the preweight."""

    params: SieveParams
    smooth: SmoothParams
    tuple: AdmissibleTuple
    scheme: IntervalScheme
    buckets: PrimeBuckets
    rho: RhoWeights
    series: float
    W: float

    @property
    def R(self) -> float:
        return self.params.R

    @property
    def w(self) -> float:
        return self.smooth.w_for(self.params.R)

    @property
    def c(self) -> float:
        return self.series / (math.factorial(self.params.ell) * self.W)

    @cached_property
    def elements(self) -> list[Element]:
        """Support of the weights: elements with generators ``<= w`` and ``|D| <= R``."""
        return list(enumerate_elements(self.scheme, self.w, self.R))

    @cached_property
    def table(self) -> WeightTable:
        return WeightTable({D: lambda_tilde(D, self) for D in self.elements}, self.R, self.scheme)


def build_setup(
    params: SieveParams,
    smooth: SmoothParams,
    tup: AdmissibleTuple,
    scheme: IntervalScheme,
    cutoff: int = 10**6,
    rho_depth: int | None = None,
) -> SmoothedSetup:
    params.check_tuple(tup)
    smooth.check_window(tup.k)
    if scheme.R0 <= 2 * tup.bound_H:
        msg = f"R0={scheme.R0} should exceed 2*bound_H={2 * tup.bound_H}"
        if smooth.strict:
            raise ValueError(msg)
        warnings.warn(msg, ConstraintWarning)
    buckets = PrimeBuckets(scheme, tup, max(params.R, smooth.w_for(params.R)))
    rho = build_rho(scheme.R0, smooth.tau, rho_depth)
    series = singular_series(tup, cutoff).value
    W = w_product(tup, scheme.R0).value
    return SmoothedSetup(params, smooth, tup, scheme, buckets, rho, series, W)


def _weighted_sum(setup: SmoothedSetup, log_y: float, z: float, excluded: Element, power: int, extra=None) -> float:
    """``sum 1/Phi(K) (log y - log|K|)^power`` over ``K`` with generators ``<= z``, ``|K| <= y``, disjoint from ``excluded``."""
    tup, b, sc = setup.tuple, setup.buckets, setup.scheme
    y = math.exp(log_y)
    ex = set(excluded)
    terms = []
    for K in enumerate_elements(sc, z, y * (1 + 1e-12)):
        if ex.intersection(K):
            continue
        gap = log_y - sc.log_size(K)
        if gap < -1e-12:
            continue
        t = max(gap, 0.0) ** power / phi(K, tup, b)
        if extra is not None:
            t *= extra(K)
        terms.append(t)
    return math.fsum(terms)


def lambda_tilde(D: Element, setup: SmoothedSetup) -> float:
    """``lambda~(D) = c mu(D)/(Phi(D) Delta(D)) sum_K 1/Phi(K) log(R/|D|/|K|)^ell``; zero off the support."""
    sc, tup, b = setup.scheme, setup.tuple, setup.buckets
    if any(sc.endpoint(j) > Fraction(setup.w) for j in D) or sc.size(D) > Fraction(setup.R):
        return 0.0
    log_y = math.log(setup.R) - sc.log_size(D)
    s = _weighted_sum(setup, log_y, setup.w, D, setup.params.ell)
    return setup.c * mu(D) / (phi(D, tup, b) * delta(D, tup, b)) * s


def lambda_tilde_bound(setup: SmoothedSetup) -> float:
    """``c G(R, w) (log R)^ell``, which dominates every ``|lambda~(D)|``."""
    G = _weighted_sum(setup, math.log(setup.R), setup.w, (), 0)
    return setup.c * G * math.log(setup.R) ** setup.params.ell


def big_lambda_tilde(n: int, setup: SmoothedSetup, membership: AdmissibleTuple | None = None) -> float:
    """``Lambda~(n)`` for a single ``n``: ``sum_D lambda~(D) #{d in D : d | prod(n + h)}``."""
    mem = setup.tuple if membership is None else membership
    total = []
    for D, v in setup.table.entries.items():
        cnt = sum(
            1
            for combo in _member_primes(D, setup.buckets)
            if all(any((n + h) % p == 0 for h in mem.elements) for p in combo)
        )
        total.append(v * cnt)
    return math.fsum(total)


def _member_primes(D: Element, buckets: PrimeBuckets):
    return itertools.product(*(buckets.primes(j).tolist() for j in D))


def big_lambda_tilde_range(
    setup: SmoothedSetup, membership: AdmissibleTuple | None = None, jobs: int = 1
) -> np.ndarray:
    mem = setup.tuple if membership is None else membership
    mods = []
    for D, v in setup.table.entries.items():
        for combo in _member_primes(D, setup.buckets):
            mods.append((math.prod(combo), v, residues_mod(mem, combo)))
    return class_sum_array(setup.params.N, mods, jobs)


def buchstab_check(setup: SmoothedSetup) -> dict[str, float]:
    """Compare the ``2 ell``-weighted K-sum over generators ``<= w`` with the Buchstab decomposition from generators ``<= R``."""
    sc, tup, b = setup.scheme, setup.tuple, setup.buckets
    R, w, p2 = setup.R, setup.w, 2 * setup.params.ell
    log_R = math.log(R)
    restricted = _weighted_sum(setup, log_R, w, (), p2)
    full = _weighted_sum(setup, log_R, R, (), p2)
    corr = []
    for j in sc.generators(R):
        if sc.endpoint(j) <= Fraction(w):
            continue
        log_y = log_R - sc.log_endpoint(j)
        smaller = tuple(i for i in sc.generators(R) if i >= j)
        inner = _weighted_sum(setup, log_y, R, smaller, p2)
        corr.append(inner / phi((j,), tup, b))
    correction = math.fsum(corr)
    return {
        "restricted": restricted,
        "full": full,
        "correction": correction,
        "residual": full - correction - restricted,
        "inclusion_holds": restricted <= full * (1 + 1e-12),
    }


def lemma3_report(setup: SmoothedSetup, jobs: int = 1) -> RangeReport:
    """``sum gamma(n) Lambda~(n)^2`` over ``(N, 2N]`` against the main term of the unsmoothed second moment."""
    p, tup = setup.params, setup.tuple
    N = p.N
    if not is_admissible(tup):
        return RangeReport(math.nan, 0.0, (N, 2 * N), {"admissible": False})
    lam = big_lambda_tilde_range(setup, jobs=jobs)
    gam = gamma_range(N, tup, setup.rho, jobs)
    empirical = stable_sum(gam * lam * lam)
    main = lemma1_main_term(setup.series, tup.k, p.ell, N, p.R)
    t_diag = quad_form_diagonal(setup.table, tup, setup.buckets)
    t_closed = setup.c**2 * _weighted_sum(setup, math.log(p.R), setup.w, (), 2 * p.ell)
    mean = setup.rho.mean(tup)
    return RangeReport(
        empirical,
        main,
        (N, 2 * N),
        {
            "admissible": True,
            "singular_series": setup.series,
            "W": setup.W,
            "rho_mean": mean,
            "rho_depth": setup.rho.truncation_depth,
            "T_tilde": {"diagonal": t_diag, "closed": t_closed},
            "sieve_prediction": N * mean * t_diag,
            "gamma_min": float(gam.min()) if gam.size else 0.0,
            "buchstab": buchstab_check(setup),
            "elements": len(setup.elements),
            "lambda_bound": {
                "bound": lambda_tilde_bound(setup),
                "max_abs": max((abs(v) for v in setup.table.entries.values()), default=0.0),
            },
        },
    )


def _require_star(setup: SmoothedSetup) -> None:
    if setup.tuple.k < 2:
        raise ValueError("the twisted forms need k >= 2 (the starred class sets are empty for k = 1)")


def t_star(setup: SmoothedSetup) -> StarredForm:
    """The twisted main-term form, by member pairs and by diagonalization."""
    _require_star(setup)
    direct = quad_form_direct(setup.table, setup.tuple, setup.buckets, star=True)
    diag = quad_form_diagonal(setup.table, setup.tuple, setup.buckets, star=True)
    return StarredForm(diag, "T*", {"direct": direct, "diagonal": diag})


def _in_band(setup: SmoothedSetup):
    lo = Fraction(setup.R) / Fraction(setup.w)
    hi = Fraction(setup.R)
    return lambda D: lo <= setup.scheme.size(D) <= hi


def t_double_star(setup: SmoothedSetup) -> StarredForm:
    """The twisted form restricted to ``R/w <= |D| <= R``, directly and by the closed K-sum expansion."""
    _require_star(setup)
    tup, b, sc = setup.tuple, setup.buckets, setup.scheme
    band = _in_band(setup)
    direct = quad_form_diagonal(setup.table, tup, b, star=True, keep=band)
    ell = setup.params.ell

    def ratio(K):
        return math.prod(1 - delta_star((j,), tup, b) / delta((j,), tup, b) for j in K)

    terms = []
    for D in setup.elements:
        if not band(D):
            continue
        log_y = math.log(setup.R) - sc.log_size(D)
        # R/|D| <= w here, so generators up to R/|D| already cover every K that fits
        y = math.exp(log_y)
        assert y <= setup.w * (1 + 1e-12)
        s = _weighted_sum(setup, log_y, min(y * (1 + 1e-12), setup.w), D, ell, ratio)
        r = delta_star(D, tup, b) / delta(D, tup, b)
        terms.append(r * r * phi_star(D, tup, b) / phi(D, tup, b) ** 2 * s * s)
    expanded = setup.c**2 * math.fsum(terms)
    return StarredForm(direct, "T**", {"direct": direct, "expanded": expanded})


def k_sum_star(y: float, D: Element, setup: SmoothedSetup) -> dict[str, float]:
    """``sum 1/Phi(K) prod_{P | K}(1 - Delta*(P)/Delta(P))`` over ``|K| <= y`` disjoint from ``D``, against ``V(R0) log y``."""
    _require_star(setup)
    tup, b = setup.tuple, setup.buckets

    def ratio(K):
        return math.prod(1 - delta_star((j,), tup, b) / delta((j,), tup, b) for j in K)

    s = _weighted_sum(setup, math.log(y), min(y, b.z_max), D, 0, ratio)
    V = v_product(setup.scheme.R0).value
    return {"y": y, "sum": s, "main": V * math.log(y), "ratio": s / (V * math.log(y))}


def lemma4_main_report(setup: SmoothedSetup, h: int, jobs: int = 1) -> RangeReport:
    """``sum varpi(n + h) gamma(n) Lambda~(n)^2`` against the main term of the unsmoothed prime-twisted moment, with the twisted forms."""
    tup, p = setup.tuple, setup.params
    if h not in tup.elements:
        raise ValueError(f"h={h} must be an element of the tuple {tup.elements}")
    _require_star(setup)
    N = p.N
    if not is_admissible(tup):
        return RangeReport(math.nan, 0.0, (N, 2 * N), {"admissible": False})
    lam = big_lambda_tilde_range(setup, jobs=jobs)
    gam = gamma_range(N, tup, setup.rho, jobs)
    pw = window_log_weights(N + h, 2 * N + h)
    empirical = stable_sum(pw * gam * lam * lam)
    main = lemma2_main_term(setup.series, tup.k, p.ell, N, p.R)
    # dropping h from the divisibility test changes nothing where n + h is prime
    rest = tup.without(h)
    on = pw > 0
    lam_rest = big_lambda_tilde_range(setup, membership=rest, jobs=jobs)
    gam_rest = gamma_range(N, rest, setup.rho, jobs)
    shift = float(np.max(np.abs(lam[on] - lam_rest[on]), initial=0.0))
    shift_g = float(np.max(np.abs(gam[on] - gam_rest[on]), initial=0.0))
    ts = t_star(setup)
    tss = t_double_star(setup)
    V = v_product(setup.scheme.R0).value
    mean_star = setup.rho.mean_star(tup)
    ys = [y for y in (setup.R**0.5, setup.R) if y >= setup.scheme.R0 * setup.scheme.R1]
    return RangeReport(
        empirical,
        main,
        (N, 2 * N),
        {
            "admissible": True,
            "h": h,
            "singular_series": setup.series,
            "W": setup.W,
            "V": V,
            "rho_mean_star": mean_star,
            "W_over_V": setup.W / V,
            "T_star": ts.routes,
            "T_double_star": tss.routes,
            "star_prediction": N * mean_star * ts.value,
            "lower_bound_route": N * mean_star * tss.value,
            "drop_h_max_shift": {"lambda": shift, "gamma": shift_g},
            "k_sum_checks": [k_sum_star(y, (), setup) for y in ys],
        },
    )


def rho_rows(rho: RhoWeights) -> list[dict[str, Any]]:
    """The preweight as ``(d, value)`` rows for CSV export."""
    return [{"d": d, "value": r} for d, r in sorted(rho.support.items())]
