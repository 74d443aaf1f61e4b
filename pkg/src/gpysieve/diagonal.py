"""Selberg diagonalization over the interval semigroup and the G-sum machinery.

The quadratic form ``J = sum xi(D1) xi(D2) sum_{d1 in D1, d2 in D2} f([d1, d2])``
with ``f(d) = nu(d)/d`` becomes ``sum_K Phi(K) Xi(K)^2`` after the transform
``Xi(K) = sum_{K | D} Delta(D) xi(D)``. Divisibility between elements is
inclusion of index sets, and coprimality is disjointness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable

from .arith import ResourceError, prime_factors
from .classic import RangeReport
from .semigroup import (
    Element,
    IntervalScheme,
    PrimeBuckets,
    delta,
    delta_star,
    enumerate_elements,
    members,
    mu,
    phi,
    phi_star,
)
from .tuples import AdmissibleTuple, singular_series, w_product

__all__ = [
    "WeightTable",
    "GValue",
    "quad_form_direct",
    "quad_form_diagonal",
    "xi_cap",
    "xi_from_cap",
    "g_sum",
    "optimal_xi",
    "completed_square",
    "bound_chain_slack",
    "t_integral",
    "t1_sum",
    "t1_decomposed",
    "g_recursion_check",
    "u_residual",
    "g_asymptotic_report",
]

DEFAULT_PAIR_BUDGET = 5_000_000


@dataclass
class WeightTable:
    entries: dict[Element, float]
    level: float
    scheme: IntervalScheme | None = None

    @property
    def xi_empty(self) -> float:
        return self.entries.get((), 0.0)

    def scaled(self, c: float) -> "WeightTable":
        return WeightTable({D: c * v for D, v in self.entries.items()}, self.level, self.scheme)

    def plus(self, other: "WeightTable") -> "WeightTable":
        keys = sorted(set(self.entries) | set(other.entries), key=lambda D: (len(D), D))
        return WeightTable(
            {D: self.entries.get(D, 0.0) + other.entries.get(D, 0.0) for D in keys}, self.level, self.scheme
        )


@dataclass(frozen=True)
class GValue:
    y: float
    z: float
    Q: Element
    value: float
    terms: int = field(default=0, compare=False)


def _subsets(D: Element) -> Iterable[Element]:
    for r in range(len(D) + 1):
        yield from combinations(D, r)


def _f(d: int, tup: AdmissibleTuple, star: bool = False) -> float:
    if star:
        return math.prod(((tup.nu(p) - 1) / (p - 1) for p, _ in prime_factors(d)), start=1.0)
    return math.prod((tup.nu(p) / p for p, _ in prime_factors(d)), start=1.0)


def _functionals(star: bool):
    return (delta_star, phi_star) if star else (delta, phi)


def quad_form_direct(
    xi: WeightTable,
    tup: AdmissibleTuple,
    buckets: PrimeBuckets,
    max_pairs: int = DEFAULT_PAIR_BUDGET,
    star: bool = False,
) -> float:
    """The quadratic form by explicit enumeration of all member pairs ``(d1, d2)``.

    Uses ``f([d1, d2]) = f(d1) f(d2) / f(gcd(d1, d2))`` for the multiplicative
    ``f(d) = nu(d)/d`` on square-free integers; ``star`` switches to
    ``f(d) = nu*(d)/phi(d)`` with ``nu*(p) = nu(p) - 1``.
    """
    support = [(D, v) for D, v in xi.entries.items() if v != 0.0]
    mem = {}
    for D, _ in support:
        mem[D] = [(d, _f(d, tup, star)) for d in members(D, buckets)]
    work = sum(len(mem[D]) for D, _ in support) ** 2
    if work > max_pairs:
        raise ResourceError(f"{work} member pairs exceeds budget {max_pairs}")
    total = []
    for D1, v1 in support:
        for D2, v2 in support:
            acc = []
            shared = set(D1) & set(D2)
            for d1, f1 in mem[D1]:
                for d2, f2 in mem[D2]:
                    g = math.gcd(d1, d2) if shared else 1
                    acc.append(f1 * f2 / _f(g, tup, star))
            total.append(v1 * v2 * math.fsum(acc))
    return math.fsum(total)


def xi_cap(xi: WeightTable, tup: AdmissibleTuple, buckets: PrimeBuckets, star: bool = False) -> WeightTable:
    """``Xi(K) = sum over D containing K of Delta(D) xi(D)``."""
    dl, _ = _functionals(star)
    acc: dict[Element, list[float]] = {}
    for D, v in xi.entries.items():
        w = dl(D, tup, buckets) * v
        for K in _subsets(D):
            acc.setdefault(K, []).append(w)
    keys = sorted(acc, key=lambda K: (len(K), K))
    return WeightTable({K: math.fsum(acc[K]) for K in keys}, xi.level, xi.scheme)


def xi_from_cap(cap: WeightTable, tup: AdmissibleTuple, buckets: PrimeBuckets) -> WeightTable:
    """Invert :func:`xi_cap`: ``xi(D) = Delta(D)^-1 sum_K mu(K) Xi(KD)``."""
    acc: dict[Element, list[float]] = {}
    for E, v in cap.entries.items():
        for D in _subsets(E):
            acc.setdefault(D, []).append(mu(tuple(j for j in E if j not in D)) * v)
    keys = sorted(acc, key=lambda D: (len(D), D))
    return WeightTable({D: math.fsum(acc[D]) / delta(D, tup, buckets) for D in keys}, cap.level, cap.scheme)


def quad_form_diagonal(
    xi: WeightTable, tup: AdmissibleTuple, buckets: PrimeBuckets, star: bool = False, keep=None
) -> float:
    """``sum_K Phi(K) Xi(K)^2``; ``keep`` optionally filters the ``K`` summed over."""
    _, ph = _functionals(star)
    cap = xi_cap(xi, tup, buckets, star)
    return math.fsum(ph(K, tup, buckets) * v * v for K, v in cap.entries.items() if keep is None or keep(K))


def _k_elements(buckets: PrimeBuckets, y: float, z: float, Q: Element) -> list[Element]:
    if y < 1:
        return []
    if z > buckets.z_max:
        raise ValueError(f"z={z} exceeds the bucket range {buckets.z_max}")
    q = set(Q)
    return [K for K in enumerate_elements(buckets.scheme, z, y) if not q.intersection(K)]


def g_sum(y: float, z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> GValue:
    """``G(y, z; Q)``: sum of ``1/Phi(K)`` over ``K`` with ``|K| <= y``, generators ``<= z``, disjoint from ``Q``."""
    Ks = _k_elements(buckets, y, z, Q)
    return GValue(y, z, tuple(Q), math.fsum(1.0 / phi(K, tup, buckets) for K in Ks), len(Ks))


def optimal_xi(
    R: float, z: float, tup: AdmissibleTuple, buckets: PrimeBuckets, xi_empty: float = 1.0
) -> WeightTable:
    """The minimising weights at fixed ``xi(emptyset)``.

    ``xi(D) = xi_empty/G(R, z) * mu(D)/(Delta(D) Phi(D)) * G(R/|D|, z; D)``.
    """
    if xi_empty == 0:
        raise ValueError("xi_empty must be non-zero")
    scheme = buckets.scheme
    elems = list(enumerate_elements(scheme, z, R))
    inv_phi = {K: 1.0 / phi(K, tup, buckets) for K in elems}
    size = {K: scheme.size(K) for K in elems}
    Rf = Fraction(R)
    G = math.fsum(inv_phi.values())
    out = {}
    for D in elems:
        lim = Rf / size[D]
        s = math.fsum(inv_phi[K] for K in elems if size[K] <= lim and not set(K) & set(D))
        out[D] = xi_empty / G * mu(D) * inv_phi[D] / delta(D, tup, buckets) * s
    return WeightTable(out, R, scheme)


def completed_square(xi: WeightTable, R: float, z: float, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    """``sum_K Phi(K) (Xi(K) - xi(0) mu(K)/(G Phi(K)))^2``, which equals ``J - xi(0)^2/G``."""
    G = g_sum(R, z, (), tup, buckets).value
    cap = xi_cap(xi, tup, buckets).entries
    x0 = xi.xi_empty
    terms = []
    for K in enumerate_elements(buckets.scheme, z, R):
        ph = phi(K, tup, buckets)
        diff = cap.get(K, 0.0) - x0 * mu(K) / (G * ph)
        terms.append(ph * diff * diff)
    return math.fsum(terms)


def bound_chain_slack(R: float, z: float, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    """Smallest ``G(R, z) - G(R/|D|, z; D)/(Delta(D) Phi(D))`` over all ``D``; nonnegative when the chain holds."""
    G = g_sum(R, z, (), tup, buckets).value
    scheme = buckets.scheme
    worst = math.inf
    for D in enumerate_elements(scheme, z, R):
        lim = Fraction(R) / scheme.size(D)
        inner = g_sum(lim, z, D, tup, buckets).value
        worst = min(worst, G - inner / (delta(D, tup, buckets) * phi(D, tup, buckets)))
    return worst


def t_integral(y: float, z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    """``T = int_1^y G(t, z; Q) dt/t``, summed exactly over the steps of ``G``."""
    if y < 1:
        raise ValueError("y must be at least 1")
    scheme = buckets.scheme
    steps = sorted(
        ((scheme.size(K), scheme.log_size(K), 1.0 / phi(K, tup, buckets)) for K in _k_elements(buckets, y, z, Q)),
        key=lambda t: t[0],
    )
    log_y = math.log(y)
    parts = []
    level = 0.0
    for i, (_, lg, w) in enumerate(steps):
        level += w
        nxt = steps[i + 1][1] if i + 1 < len(steps) else log_y
        parts.append(level * (nxt - lg))
    return math.fsum(parts)


def t1_sum(y: float, z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    scheme = buckets.scheme
    return math.fsum(scheme.log_size(K) / phi(K, tup, buckets) for K in _k_elements(buckets, y, z, Q))


def t1_decomposed(y: float, z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    """``sum over generators P not in Q of log|P|/Phi(P) * G(y/|P|, z; PQ)``."""
    scheme = buckets.scheme
    q = set(Q)
    parts = []
    for j in scheme.generators(z):
        if j in q:
            continue
        g = g_sum(Fraction(y) / scheme.endpoint(j), z, tuple(sorted(q | {j})), tup, buckets).value
        parts.append(scheme.log_endpoint(j) / phi((j,), tup, buckets) * g)
    return math.fsum(parts)


def g_recursion_check(
    y: float, z: float, Q: Element, P: int, tup: AdmissibleTuple, buckets: PrimeBuckets
) -> float:
    """Residual of ``G(y; Q) = G(y; PQ) + G(y/|P|; PQ)/Phi(P)`` for a generator index ``P``."""
    scheme = buckets.scheme
    if P in Q:
        raise ValueError(f"generator {P} already divides Q={Q}")
    if scheme.endpoint(P) > Fraction(z):
        raise ValueError(f"generator {P} exceeds z={z}")
    PQ = tuple(sorted(set(Q) | {P}))
    lhs = g_sum(y, z, Q, tup, buckets).value
    a = g_sum(y, z, PQ, tup, buckets).value
    b = g_sum(Fraction(y) / scheme.endpoint(P), z, PQ, tup, buckets).value / phi((P,), tup, buckets)
    return lhs - a - b


def u_residual(y: float, z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> dict[str, float]:
    """``U = T1 - k T(y) + k T(y/z)`` together with its ratio to ``G log R0``."""
    k = tup.k
    T1 = t1_sum(y, z, Q, tup, buckets)
    Ty = t_integral(y, z, Q, tup, buckets)
    Tyz = t_integral(y / z, z, Q, tup, buckets) if y / z >= 1 else 0.0
    U = T1 - k * Ty + k * Tyz
    G = g_sum(y, z, Q, tup, buckets).value
    return {"U": U, "G": G, "ratio": U / (G * buckets.scheme.log_R0)}


def g_asymptotic_report(
    z: float, Q: Element, tup: AdmissibleTuple, buckets: PrimeBuckets, cutoff: int = 10**6
) -> RangeReport:
    """``G(z; Q)`` against ``W(R0)/(k! S) (log z)^k``."""
    scheme = buckets.scheme
    G = g_sum(z, z, Q, tup, buckets)
    W = w_product(tup, scheme.R0).value
    S = singular_series(tup, cutoff).value
    main = W / (math.factorial(tup.k) * S) * math.log(z) ** tup.k if S > 0 else 0.0
    return RangeReport(
        G.value,
        main,
        (0, 0),
        {"z": z, "Q": list(Q), "terms": G.terms, "error_scale": scheme.log_R0 / math.log(z), "W": W, "S": S},
    )
