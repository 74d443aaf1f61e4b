"""Admissible tuples, their residue systems and the Euler products built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .arith import crt_pair, is_squarefree, iter_prime_blocks, prime_factors, primes_up_to

__all__ = [
    "AdmissibleTuple",
    "ResidueSystem",
    "EulerProductValue",
    "omega_size",
    "omega_residues",
    "omega",
    "is_admissible",
    "omega_membership",
    "residues_mod",
    "star_residues_mod",
    "singular_series",
    "w_product",
    "v_product",
]


@dataclass(frozen=True)
class AdmissibleTuple:
    """The offsets ``h_1 < ... < h_k``.

    The name follows the usage of the sieve; admissibility itself is a
    property checked by :func:`is_admissible`, not enforced here.
    """

    elements: tuple[int, ...]
    bound_H: int

    def __post_init__(self):
        els = tuple(int(h) for h in self.elements)
        if not els:
            raise ValueError("a tuple needs at least one element")
        if any(b <= a for a, b in zip(els, els[1:])):
            raise ValueError(f"elements must be strictly increasing: {els}")
        if self.bound_H < 1:
            raise ValueError("bound_H must be positive")
        if any(abs(h) > self.bound_H for h in els):
            raise ValueError(f"|h| exceeds bound_H={self.bound_H}")
        object.__setattr__(self, "elements", els)

    @classmethod
    def of(cls, hs: Iterable[int], bound_H: int | None = None) -> "AdmissibleTuple":
        els = sorted(int(h) for h in hs)
        if len(set(els)) != len(els):
            raise ValueError(f"offsets must be distinct: {els}")
        if bound_H is None:
            bound_H = max(1, max((abs(h) for h in els), default=1))
        return cls(tuple(els), bound_H)

    @property
    def k(self) -> int:
        return len(self.elements)

    def without(self, h: int) -> "AdmissibleTuple":
        if h not in self.elements:
            raise ValueError(f"{h} is not an element of {self.elements}")
        rest = tuple(x for x in self.elements if x != h)
        return AdmissibleTuple(rest, self.bound_H)

    def translate(self, c: int) -> "AdmissibleTuple":
        return AdmissibleTuple.of((h + c for h in self.elements))

    @cached_property
    def _small_nu(self) -> dict[int, int]:
        # primes above 2H always give k distinct classes
        lim = 2 * self.bound_H
        return {int(p): len({(-h) % int(p) for h in self.elements}) for p in primes_up_to(lim)}

    def nu(self, p: int) -> int:
        return self._small_nu.get(p, self.k) if p <= 2 * self.bound_H else self.k

    def nu_array(self, primes: np.ndarray) -> np.ndarray:
        out = np.full(primes.shape, self.k, dtype=np.int64)
        small = primes <= 2 * self.bound_H
        if small.any():
            out[small] = [self._small_nu[int(p)] for p in primes[small]]
        return out


@dataclass(frozen=True)
class ResidueSystem:
    prime: int
    residues: frozenset[int]

    @property
    def size(self) -> int:
        return len(self.residues)


@dataclass(frozen=True)
class EulerProductValue:
    value: float
    cutoff: int
    tail_bound: float = 0.0


def omega_residues(tup: AdmissibleTuple, p: int) -> tuple[int, ...]:
    return tuple(sorted({(-h) % p for h in tup.elements}))


def omega(tup: AdmissibleTuple, p: int) -> ResidueSystem:
    return ResidueSystem(p, frozenset(omega_residues(tup, p)))


def omega_size(tup: AdmissibleTuple, p: int) -> int:
    return tup.nu(p)


def is_admissible(tup: AdmissibleTuple) -> bool:
    # |Omega(p)| <= k < p for p > k, so only p <= k can fail
    return all(tup.nu(int(p)) < p for p in primes_up_to(tup.k))


def omega_membership(n: int, d: int, tup: AdmissibleTuple) -> bool:
    """True iff ``d`` divides ``(n + h_1) ... (n + h_k)``; ``d`` must be square-free."""
    if d < 1 or not is_squarefree(d):
        raise ValueError(f"d={d} must be a positive square-free integer")
    return all(any((n + h) % p == 0 for h in tup.elements) for p, _ in prime_factors(d))


def _combine(primes: Sequence[int], per_prime) -> list[int]:
    res, mod = [0], 1
    for p in primes:
        cls = per_prime(p)
        res = [crt_pair(r, mod, c, p) for r in res for c in cls]
        mod *= p
    return res


def residues_mod(tup: AdmissibleTuple, primes: Sequence[int]) -> list[int]:
    """Residues ``n mod d`` (``d = prod(primes)``) with ``d | prod(n + h_i)``."""
    return _combine(primes, lambda p: omega_residues(tup, p))


def star_residues_mod(tup: AdmissibleTuple, h: int, primes: Sequence[int]) -> list[int]:
    """Like :func:`residues_mod` but with the class ``-h`` removed at every prime."""
    return _combine(primes, lambda p: [c for c in omega_residues(tup, p) if c != (-h) % p])


def _log_sum(primes: np.ndarray, nu: np.ndarray, k: int | None) -> float:
    terms = np.log1p(-nu / primes)
    if k is not None:
        terms = terms - k * np.log1p(-1.0 / primes)
    return math.fsum(terms.tolist())


@lru_cache(maxsize=64)
def singular_series(tup: AdmissibleTuple, cutoff: int = 10**6) -> EulerProductValue:
    """Truncated singular series with a rigorous bound on the neglected tail.

    For ``p > max(cutoff, 2k)`` the local factor ``(1 - k/p)(1 - 1/p)^-k``
    satisfies ``|log f(p)| <= k^2/p^2``; summing over all integers beyond the
    cutoff gives ``|log tail| <= k^2/X``.
    """
    if cutoff < 2 * tup.bound_H:
        raise ValueError("cutoff must be at least 2*bound_H")
    k = tup.k
    X = max(int(cutoff), 2 * k)
    if not is_admissible(tup):
        return EulerProductValue(0.0, X, 0.0)
    partials = []
    for block in iter_prime_blocks(X):
        partials.append(_log_sum(block.astype(np.float64), tup.nu_array(block), k))
    value = math.exp(math.fsum(partials))
    tail = 0.0 if k == 1 else -value * math.expm1(-k * k / X)
    return EulerProductValue(value, X, tail)


def _finite_product(primes: np.ndarray, nu: np.ndarray) -> float:
    if (nu >= primes).any():
        return 0.0
    return math.exp(_log_sum(primes.astype(np.float64), nu, None))


def w_product(tup: AdmissibleTuple, R0: float) -> EulerProductValue:
    """``prod_{p <= R0} (1 - nu(p)/p)``."""
    ps = primes_up_to(int(math.floor(R0))) if R0 >= 2 else primes_up_to(1)
    if ps.size == 0:
        return EulerProductValue(1.0, 1, 0.0)
    return EulerProductValue(_finite_product(ps, tup.nu_array(ps)), int(ps[-1]), 0.0)


def v_product(R0: float) -> EulerProductValue:
    """``prod_{p <= R0} (1 - 1/p)``."""
    ps = primes_up_to(int(math.floor(R0))) if R0 >= 2 else primes_up_to(1)
    if ps.size == 0:
        return EulerProductValue(1.0, 1, 0.0)
    return EulerProductValue(_finite_product(ps, np.ones_like(ps)), int(ps[-1]), 0.0)
