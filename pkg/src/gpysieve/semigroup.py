"""Prime intervals, the semigroup of interval products, and its multiplicative functionals.

Primes above ``R0`` are grouped into intervals ``P_j = (R0 R1^(j-1), R0 R1^j]``
for ``j = 1, 2, ...``, and ``|P_j| = R0 R1^j`` is the right endpoint. An
element ``D`` of the semigroup is a set of interval indices, stored as an
increasing tuple; the empty tuple is the identity with ``|D| = 1``. The
integers "belonging" to ``D`` are the products of one prime from each of
its intervals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator

import numpy as np

from .arith import ResourceError, primes_up_to
from .tuples import AdmissibleTuple

__all__ = [
    "Element",
    "IntervalScheme",
    "PrimeBuckets",
    "EmptyBucketError",
    "default_scheme",
    "interval_of",
    "enumerate_elements",
    "members",
    "mu",
    "delta",
    "phi",
    "psi",
    "delta_star",
    "phi_star",
    "DEFAULT_ELEMENT_CAP",
]

Element = tuple  # increasing tuple of positive interval indices

DEFAULT_ELEMENT_CAP = 2_000_000


class EmptyBucketError(ValueError):
    """An interval holds no primes, so its functionals are undefined."""


@dataclass(frozen=True)
class IntervalScheme:
    """The partition of ``(R0, inf)`` into intervals growing by the factor ``R1``.

    ``log_R0`` and ``log_R1`` are the primary data so that asymptotic
    schemes with astronomically large endpoints stay representable; exact
    endpoints are only available when ``R0`` and ``R1`` are finite floats.
    """

    R0: float
    R1: float
    log_R0: float
    log_R1: float

    def __post_init__(self):
        if not self.log_R0 > 0 or not self.log_R1 > 0:
            raise ValueError("need R0 > 1 and R1 > 1")

    @classmethod
    def of(cls, R0: float, R1: float) -> "IntervalScheme":
        return cls(float(R0), float(R1), math.log(R0), math.log(R1))

    @property
    def exact(self) -> bool:
        return math.isfinite(self.R0) and math.isfinite(self.R1)

    def endpoint(self, j: int) -> Fraction:
        """``|P_j| = R0 R1^j`` as an exact rational (of the stored floats)."""
        if not self.exact:
            raise OverflowError("scheme endpoints are not representable; use log_size")
        return Fraction(self.R0) * Fraction(self.R1) ** j

    def lower(self, j: int) -> Fraction:
        return self.endpoint(j - 1)

    def log_endpoint(self, j: int) -> float:
        return self.log_R0 + j * self.log_R1

    def generators(self, z: float) -> list[int]:
        """Indices ``j >= 1`` with ``|P_j| <= z``."""
        if z < self.R0 * self.R1:
            return []
        zf = Fraction(z)
        j = max(1, int((math.log(z) - self.log_R0) / self.log_R1) - 1)
        while self.endpoint(j + 1) <= zf:
            j += 1
        while j >= 1 and self.endpoint(j) > zf:
            j -= 1
        return list(range(1, j + 1))

    def size(self, D: Element) -> Fraction:
        return math.prod((self.endpoint(j) for j in D), start=Fraction(1))

    def log_size(self, D: Element) -> float:
        return math.fsum(self.log_endpoint(j) for j in D)


def default_scheme(R: float | None = None, log_R: float | None = None) -> IntervalScheme:
    """The asymptotic choice ``R0 = exp(log R / L^(1/5))``, ``R1 = exp(log R / L^(9/10))`` with ``L = log log R``.

    Pass ``log_R`` instead of ``R`` when ``R`` itself overflows a float.
    """
    if log_R is None:
        if R is None:
            raise ValueError("give R or log_R")
        log_R = math.log(R)
    if log_R <= 1 or math.log(log_R) < 1:
        raise ValueError(
            "R too small for the asymptotic scheme (need log log R >= 1); pass explicit R0 and R1"
        )
    L = math.log(log_R)
    lr0 = log_R / L**0.2
    lr1 = log_R / L**0.9

    def ex(x):
        return math.exp(x) if x < 700 else math.inf

    return IntervalScheme(ex(lr0), ex(lr1), lr0, lr1)


def interval_of(p: int, scheme: IntervalScheme) -> int | None:
    """The ``j`` with ``R0 R1^(j-1) < p <= R0 R1^j``, or ``None`` for ``p <= R0``."""
    if Fraction(p) <= Fraction(scheme.R0):
        return None
    j = max(1, math.ceil((math.log(p) - scheme.log_R0) / scheme.log_R1))
    while scheme.endpoint(j) < p:
        j += 1
    while j > 1 and scheme.lower(j) >= p:
        j -= 1
    return j


def mu(D: Element) -> int:
    return -1 if len(D) % 2 else 1


class PrimeBuckets:
    """Primes of each interval up to ``z_max`` with the sums the functionals need."""

    def __init__(self, scheme: IntervalScheme, tup: AdmissibleTuple, z_max: float):
        self.scheme = scheme
        self.tuple = tup
        self.z_max = z_max
        self.indices = scheme.generators(z_max)
        ps = primes_up_to(int(math.floor(z_max)))
        self._primes: dict[int, np.ndarray] = {}
        for j in self.indices:
            lo = math.floor(scheme.lower(j))
            hi = math.floor(scheme.endpoint(j))
            a, b = np.searchsorted(ps, [lo, hi], side="right")
            self._primes[j] = ps[a:b]

    def primes(self, j: int) -> np.ndarray:
        try:
            return self._primes[j]
        except KeyError:
            raise KeyError(f"interval {j} is beyond z_max={self.z_max}") from None

    def _nonempty(self, j: int) -> np.ndarray:
        ps = self.primes(j)
        if ps.size == 0:
            raise EmptyBucketError(f"interval {j} contains no primes; choose a larger R1")
        return ps

    @cached_property
    def _moments(self) -> dict[int, tuple[float, float, float, float]]:
        out = {}
        for j in self.indices:
            ps = self.primes(j)
            p = ps.astype(np.float64)
            nu = self.tuple.nu_array(ps).astype(np.float64)
            f = nu / p
            fs = (nu - 1) / (p - 1)
            out[j] = (
                math.fsum(f.tolist()),
                math.fsum((f * (1 - f)).tolist()),
                math.fsum(fs.tolist()),
                math.fsum((fs * (1 - fs)).tolist()),
            )
        return out

    def delta1(self, j: int) -> float:
        self._nonempty(j)
        return self._moments[j][0]

    def phi1(self, j: int) -> float:
        self._nonempty(j)
        s, v = self._moments[j][:2]
        return v / (s * s)

    def _check_star(self, j: int) -> None:
        ps = self._nonempty(j)
        if (self.tuple.nu_array(ps) <= 1).any():
            raise ValueError(
                f"interval {j} holds a prime with a single tuple class; raise R0 above 2*bound_H"
            )

    def delta_star1(self, j: int) -> float:
        self._check_star(j)
        return self._moments[j][2]

    def phi_star1(self, j: int) -> float:
        self._check_star(j)
        s, v = self._moments[j][2:]
        return v / (s * s)


def enumerate_elements(
    scheme: IntervalScheme, z: float, R: float, cap: int = DEFAULT_ELEMENT_CAP
) -> Iterator[Element]:
    """Every element with generators ``|P_j| <= z`` and ``|D| <= R``, depth first from the empty one."""
    gens = scheme.generators(min(z, R))
    ends = [scheme.endpoint(j) for j in gens]
    bound = Fraction(R)
    count = 0

    def rec(start: int, cur: tuple, size: Fraction):
        nonlocal count
        count += 1
        if count > cap:
            raise ResourceError(f"more than {cap} semigroup elements")
        yield cur
        for i in range(start, len(gens)):
            ns = size * ends[i]
            if ns > bound:
                break
            yield from rec(i + 1, cur + (gens[i],), ns)

    yield from rec(0, (), Fraction(1))


def members(D: Element, buckets: PrimeBuckets) -> Iterator[int]:
    """All ``d`` belonging to ``D``: one prime from each interval of ``D``."""
    for combo in itertools.product(*(buckets.primes(j).tolist() for j in D)):
        yield math.prod(combo)


def _check(tup: AdmissibleTuple, buckets: PrimeBuckets) -> None:
    if tup != buckets.tuple:
        raise ValueError("buckets were built for a different tuple")


def delta(D: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    _check(tup, buckets)
    return math.prod(buckets.delta1(j) for j in D)


def phi(D: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    _check(tup, buckets)
    return math.prod(buckets.phi1(j) for j in D)


def psi(j: int, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    """``1/(1 + Phi(P_j))`` for a single generator."""
    return 1.0 / (1.0 + phi((j,), tup, buckets))


def delta_star(D: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    _check(tup, buckets)
    return math.prod(buckets.delta_star1(j) for j in D)


def phi_star(D: Element, tup: AdmissibleTuple, buckets: PrimeBuckets) -> float:
    _check(tup, buckets)
    return math.prod(buckets.phi_star1(j) for j in D)
