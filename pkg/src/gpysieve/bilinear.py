"""The remainder of the twisted smoothed sum and its regrouping into a bilinear form.

Every modulus ``q = d [d1, d2]`` met in the remainder is split as ``q = a b``
where ``a`` collects the primes of ``[d1, d2]`` lying in the smallest
intervals, as long as the product of those interval sizes stays ``<= A``,
and ``b`` takes the rest together with the small smooth part ``d``. The
split depends only on the triple ``(D1, D2, F)``, with ``F`` the intervals
on which ``d1`` and ``d2`` share their prime, so each triple contributes a
product set of ``a`` and ``b`` values with coefficients ``alpha = 1`` and
``beta = rho(d)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from .arith import prime_factors, window_log_weights
from .semigroup import Element, IntervalScheme, interval_of
from .smoothed import SmoothedSetup, lemma4_main_report
from .tuples import AdmissibleTuple, omega_residues

__all__ = [
    "SplitError",
    "ModulusSplit",
    "BilinearLedger",
    "RemainderOracle",
    "ab_budget",
    "split_modulus",
    "error_sum_direct",
    "error_sum_bilinear",
    "triple_count",
    "remainder_scaling_diagnostic",
    "decomposition_check",
]


class SplitError(ValueError):
    """A split violated ``a <= A`` or ``b <= B``."""


@dataclass(frozen=True)
class ModulusSplit:
    a: int
    b: int
    u: int
    s: int
    source: tuple


@dataclass
class BilinearLedger:
    A: float
    B: float
    rows: int = 0
    triples: int = 0
    max_a: int = 1
    max_b: int = 1
    a_violations: int = 0
    b_violations: int = 0
    alpha_values: set = field(default_factory=set)
    beta_values: set = field(default_factory=set)
    no_prefix_triples: int = 0
    non_squarefree_skipped: int = 0
    lower_chain_violations: int = 0
    maximality_violations: int = 0
    max_u: int = 0
    totals: dict = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            "A": self.A,
            "B": self.B,
            "rows": self.rows,
            "triples": self.triples,
            "max_a": self.max_a,
            "max_b": self.max_b,
            "a_violations": self.a_violations,
            "b_violations": self.b_violations,
            "alpha_values": sorted(self.alpha_values),
            "beta_values": sorted(self.beta_values),
            "no_prefix_triples": self.no_prefix_triples,
            "non_squarefree_skipped": self.non_squarefree_skipped,
            "lower_chain_violations": self.lower_chain_violations,
            "maximality_violations": self.maximality_violations,
            "max_u": self.max_u,
        }

    @property
    def coefficients_ok(self) -> bool:
        return self.alpha_values <= {0, 1} and self.beta_values <= {-1, 0, 1}

    @property
    def support_ok(self) -> bool:
        return self.a_violations == 0 and self.b_violations == 0


class RemainderOracle:
    """``S(q) = sum over r in Omega*(q) of E*(N; r + h, q)`` for square-free ``q``.

    ``E*(N; a, q)`` is the prime-log sum over ``N < p <= 2N``, ``p = a (mod q)``,
    minus ``N/phi(q)``. The class ``r + h`` is the one taken by the prime
    ``n + h`` when ``n`` lies in ``r``.
    """

    def __init__(self, N: int, tup: AdmissibleTuple, h: int):
        if h not in tup.elements:
            raise ValueError(f"h={h} must be an element of the tuple {tup.elements}")
        self.N, self.tuple, self.h = N, tup, h
        w = window_log_weights(N, 2 * N)
        idx = np.flatnonzero(w)
        self.primes = (idx + N + 1).astype(np.int64)
        self.logs = w[idx]
        self._masks: dict[int, np.ndarray] = {}
        self._cache: dict[tuple[int, ...], float] = {}

    def star_classes(self, p: int) -> list[int]:
        return [c for c in omega_residues(self.tuple, p) if c != (-self.h) % p]

    def _mask(self, p: int) -> np.ndarray:
        m = self._masks.get(p)
        if m is None:
            shifted = (self.primes - self.h) % p
            m = np.isin(shifted, self.star_classes(p))
            self._masks[p] = m
        return m

    def value(self, qprimes: tuple[int, ...]) -> float:
        """``S(q)`` for ``q`` given by its sorted distinct prime factors."""
        got = self._cache.get(qprimes)
        if got is not None:
            return got
        if qprimes:
            m = self._mask(qprimes[0])
            for p in qprimes[1:]:
                m = m & self._mask(p)
            theta = math.fsum(self.logs[m].tolist())
        else:
            theta = math.fsum(self.logs.tolist())
        count = math.prod(len(self.star_classes(p)) for p in qprimes)
        phi = math.prod(p - 1 for p in qprimes)
        out = theta - count * self.N / phi
        self._cache[qprimes] = out
        return out


def ab_budget(setup: SmoothedSetup) -> float:
    """``R0^(2 tau) R^2 w``, the allowed size of ``A B``."""
    sc = setup.scheme
    return math.exp(2 * setup.smooth.tau * sc.log_R0 + 2 * math.log(setup.R) + math.log(setup.w))


def _slots(D1: Element, D2: Element, F: Element) -> list[tuple[int, int]]:
    """Interval slots of ``D1 D2 / F`` in ascending size: ``(j, owner)`` with owner 0 shared, 1 from d1, 2 from d2."""
    out = []
    f, s1, s2 = set(F), set(D1), set(D2)
    for j in sorted(s1 | s2):
        if j in f:
            out.append((j, 0))
        else:
            if j in s1:
                out.append((j, 1))
            if j in s2:
                out.append((j, 2))
    return out


def _prefix_len(slots: list[tuple[int, int]], A: float, scheme: IntervalScheme) -> int:
    Af = Fraction(A)
    prod = Fraction(1)
    u = 0
    for j, _ in slots:
        prod *= scheme.endpoint(j)
        if prod > Af:
            break
        u += 1
    return u


def _prime_in(n: int, j: int, scheme: IntervalScheme) -> int:
    hits = [p for p, _ in prime_factors(n) if interval_of(p, scheme) == j]
    if len(hits) != 1:
        raise ValueError(f"{n} has {len(hits)} primes in interval {j}")
    return hits[0]


def split_modulus(
    D1: Element,
    D2: Element,
    F: Element,
    d1: int,
    d2: int,
    d: int,
    A: float,
    scheme: IntervalScheme,
    B: float | None = None,
) -> ModulusSplit:
    """Split ``d [d1, d2]`` into ``a b`` for one term of the remainder."""
    if not set(F) <= set(D1) & set(D2):
        raise ValueError("F must divide the gcd of D1 and D2")
    g = math.gcd(d1, d2)
    shared = tuple(sorted(interval_of(p, scheme) for p, _ in prime_factors(g))) if g > 1 else ()
    if shared != tuple(sorted(F)):
        raise ValueError(f"gcd(d1, d2) has intervals {shared}, not F={tuple(F)}")
    slots = _slots(D1, D2, F)
    u = _prefix_len(slots, A, scheme)
    primes = [_prime_in(d2 if owner == 2 else d1, j, scheme) for j, owner in slots]
    a = math.prod(primes[:u])
    b = d * math.prod(primes[u:])
    if a > A:
        raise SplitError(f"a={a} exceeds A={A}")
    if B is not None and b > B * (1 + 1e-12):
        raise SplitError(f"b={b} exceeds B={B} (u={u}, slots={slots})")
    return ModulusSplit(a, b, u, len(slots), (tuple(D1), tuple(D2), tuple(F), d, d1, d2))


def _sorted_union(*parts) -> tuple[int, ...]:
    return tuple(sorted(set().union(*parts)))


def error_sum_direct(setup: SmoothedSetup, h: int, oracle: RemainderOracle | None = None) -> float:
    """The remainder ``sum lambda~ lambda~ sum_d rho(d) sum_{d1, d2} S(d [d1, d2])`` term by term."""
    if oracle is None:
        oracle = RemainderOracle(setup.params.N, setup.tuple, h)
    b = setup.buckets
    table = [(D, v) for D, v in setup.table.entries.items() if v != 0.0]
    combos = {D: [tuple(c) for c in itertools.product(*(b.primes(j).tolist() for j in D))] for D, _ in table}
    rho = sorted(setup.rho.support.items())
    rho_f = setup.rho.factors
    outer = []
    for D1, v1 in table:
        for D2, v2 in table:
            acc = []
            for c1 in combos[D1]:
                for c2 in combos[D2]:
                    l = set(c1) | set(c2)
                    for d, r in rho:
                        acc.append(r * oracle.value(_sorted_union(l, rho_f[d])))
            outer.append(v1 * v2 * math.fsum(acc))
    return math.fsum(outer)


def _fills(slots, buckets) -> list[tuple[int, ...]]:
    return [tuple(c) for c in itertools.product(*(buckets.primes(j).tolist() for j, _ in slots))]


def _distinct_products(slots, buckets) -> dict[int, tuple[int, ...]]:
    """Square-free products of one prime per slot, keyed by value."""
    out = {}
    for c in _fills(slots, buckets):
        if len(set(c)) == len(c):
            out.setdefault(math.prod(c), tuple(sorted(c)))
    return out


def error_sum_bilinear(
    setup: SmoothedSetup,
    h: int,
    A: float,
    oracle: RemainderOracle | None = None,
    row_sink: Callable[[dict], None] | None = None,
) -> tuple[float, BilinearLedger]:
    """The remainder regrouped per triple ``(D1, D2, F)`` as ``sum alpha_a beta_b S(ab)``."""
    if A < 1:
        raise ValueError("A must be at least 1")
    if oracle is None:
        oracle = RemainderOracle(setup.params.N, setup.tuple, h)
    sc, bk = setup.scheme, setup.buckets
    B = ab_budget(setup) / A
    ledger = BilinearLedger(A, B)
    table = [(D, v) for D, v in setup.table.entries.items() if v != 0.0]
    rho = sorted(setup.rho.support.items())
    rho_f = setup.rho.factors
    outer = []
    for D1, v1 in table:
        for D2, v2 in table:
            common = sorted(set(D1) & set(D2))
            for r in range(len(common) + 1):
                for F in itertools.combinations(common, r):
                    outer.append(
                        v1 * v2 * _triple_value(D1, D2, F, A, B, sc, bk, rho, rho_f, oracle, ledger, row_sink, v1 * v2)
                    )
    return math.fsum(outer), ledger


def _triple_value(D1, D2, F, A, B, sc, bk, rho, rho_f, oracle, ledger, row_sink, weight) -> float:
    slots = _slots(D1, D2, F)
    u = _prefix_len(slots, A, sc)
    pre, post = slots[:u], slots[u:]
    ledger.triples += 1
    ledger.max_u = max(ledger.max_u, u)
    if u == 0 and slots:
        ledger.no_prefix_triples += 1
    if u < len(slots):
        # the prefix cannot absorb the next interval
        if math.prod((sc.endpoint(j) for j, _ in slots[: u + 1]), start=Fraction(1)) <= Fraction(A):
            ledger.maximality_violations += 1
    doubled = set(D1) & set(D2) - set(F)
    pre_j = [j for j, _ in pre]
    post_j = [j for j, _ in post]
    c = sum(1 for j in doubled if pre_j.count(j) == 2 or post_j.count(j) == 2)
    mult = 2**c
    a_vals = _distinct_products(pre, bk)
    tail = _distinct_products(post, bk)
    b_vals = []
    for t, tp in tail.items():
        for d, r in rho:
            b_vals.append((d * t, r, _sorted_union(tp, rho_f[d])))
    lower = None
    if u < len(slots):
        nxt = sc.endpoint(slots[u][0])
        lower = Fraction(A) / (nxt * Fraction(sc.R1) ** u)
    acc = []
    for a, ap in a_vals.items():
        if a > A:
            ledger.a_violations += 1
        if lower is not None and a <= lower:
            ledger.lower_chain_violations += 1
        ledger.max_a = max(ledger.max_a, a)
        aset = set(ap)
        for b, beta, bp in b_vals:
            if aset.intersection(bp):
                ledger.non_squarefree_skipped += 1
                continue
            if b > B * (1 + 1e-12):
                ledger.b_violations += 1
            ledger.max_b = max(ledger.max_b, b)
            ledger.rows += 1
            ledger.alpha_values.add(1)
            ledger.beta_values.add(beta)
            val = beta * oracle.value(_sorted_union(ap, bp))
            acc.append(val)
            key = (a, b)
            ledger.totals[key] = ledger.totals.get(key, 0.0) + weight * mult * val
            if row_sink is not None:
                row_sink({"a": a, "b": b, "alpha": 1, "beta": beta, "contribution": weight * mult * val})
    return mult * math.fsum(acc)


def triple_count(setup: SmoothedSetup) -> int:
    """Number of triples ``(D1, D2, F)`` with ``F`` dividing the gcd of ``D1`` and ``D2``."""
    els = [D for D, v in setup.table.entries.items() if v != 0.0]
    return sum(2 ** len(set(D1) & set(D2)) for D1 in els for D2 in els)


def remainder_scaling_diagnostic(setups: list[SmoothedSetup], hs: list[list[int]] | None = None) -> list[dict]:
    """Measured remainder sizes, scaled by ``(log N)^C1 / N`` with ``C1 = 2(k + ell + 1)``."""
    rows = []
    for i, st in enumerate(setups):
        tup = st.tuple
        for h in (hs[i] if hs is not None else list(tup.elements)):
            E = error_sum_direct(st, h)
            N = st.params.N
            C1 = 2 * (tup.k + st.params.ell + 1)
            L = math.log(math.log(st.R)) if st.R > math.e else 0.0
            rows.append(
                {
                    "tuple": list(tup.elements),
                    "h": h,
                    "E": E,
                    "C1": C1,
                    "scaled": E * math.log(N) ** C1 / N,
                    "triples": triple_count(st),
                    "triple_bound": math.exp(max(L, 0.0) ** 0.9 * math.log(3)),
                }
            )
    return rows


def decomposition_check(setup: SmoothedSetup, h: int, E: float, jobs: int = 1) -> dict[str, float]:
    """Compare the twisted sum with ``N mean* T* + E``; they differ only by primes near the window edges."""
    rep = lemma4_main_report(setup, h, jobs)
    pred = rep.notes["star_prediction"] + E
    return {"empirical": rep.empirical, "main_plus_remainder": pred, "relative_gap": (rep.empirical - pred) / rep.empirical}
