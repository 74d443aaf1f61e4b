"""Prime tables, square-free helpers and deterministic summation.

Everything here is plumbing shared by the sieve modules: an Eratosthenes
sieve (plain and segmented), a window sieve for ``(lo, hi]``, small
factorization helpers, CRT, and a chunked summation whose result does not
depend on how the work was split.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from sympy import isprime

__all__ = [
    "ResourceError",
    "DEFAULT_MAX_ENTRIES",
    "primes_up_to",
    "iter_prime_blocks",
    "window_prime_mask",
    "window_log_weights",
    "is_prime",
    "prime_factors",
    "is_squarefree",
    "mobius",
    "totient_squarefree",
    "crt_pair",
    "stable_sum",
    "squarefree_products",
]

# Upper bound on the number of array entries any single table may allocate.
DEFAULT_MAX_ENTRIES = 400_000_000


class ResourceError(RuntimeError):
    """A computation would exceed its configured size budget."""


def _check_budget(n: int, max_entries: int | None, what: str) -> None:
    cap = DEFAULT_MAX_ENTRIES if max_entries is None else max_entries
    if n > cap:
        raise ResourceError(f"{what}: {n} entries exceeds budget {cap}")


@lru_cache(maxsize=8)
def _sieve_cached(limit: int) -> np.ndarray:
    mask = np.ones(limit + 1, dtype=bool)
    mask[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if mask[p]:
            mask[p * p :: p] = False
    out = np.flatnonzero(mask).astype(np.int64)
    out.setflags(write=False)
    return out


def primes_up_to(limit: int, max_entries: int | None = None) -> np.ndarray:
    """Return all primes ``p <= limit`` as a read-only int64 array."""
    limit = int(limit)
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    _check_budget(limit, max_entries, "primes_up_to")
    return _sieve_cached(limit)


def window_prime_mask(lo: int, hi: int, max_entries: int | None = None) -> np.ndarray:
    """Boolean mask ``m`` with ``m[i]`` true iff ``lo + 1 + i`` is prime.

    Covers the half-open window ``(lo, hi]``; only the base primes up to
    ``sqrt(hi)`` are materialised.
    """
    lo, hi = int(lo), int(hi)
    size = max(hi - lo, 0)
    _check_budget(size, max_entries, "window_prime_mask")
    mask = np.ones(size, dtype=bool)
    if size == 0:
        return mask
    start = lo + 1
    for n in range(start, min(hi, 1) + 1):
        mask[n - start] = False
    for p in primes_up_to(math.isqrt(hi)):
        p = int(p)
        first = max(p * p, ((start + p - 1) // p) * p)
        if first > hi:
            continue
        mask[first - start :: p] = False
    return mask


def iter_prime_blocks(limit: int, block: int = 1 << 22) -> Iterator[np.ndarray]:
    """Stream the primes ``<= limit`` in increasing blocks (segmented sieve)."""
    lo = 1
    while lo < limit:
        hi = min(lo + block, limit)
        mask = window_prime_mask(lo, hi, max_entries=block)
        yield np.flatnonzero(mask).astype(np.int64) + lo + 1
        lo = hi


def window_log_weights(lo: int, hi: int, max_entries: int | None = None) -> np.ndarray:
    """Array of ``log n`` for prime ``n`` and 0 otherwise, over ``(lo, hi]``."""
    mask = window_prime_mask(lo, hi, max_entries)
    out = np.zeros(mask.size, dtype=np.float64)
    idx = np.flatnonzero(mask)
    out[idx] = np.log((idx + lo + 1).astype(np.float64))
    return out


def is_prime(n: int) -> bool:
    return n >= 2 and bool(isprime(int(n)))


@lru_cache(maxsize=1 << 16)
def prime_factors(n: int) -> tuple[tuple[int, int], ...]:
    """Trial-division factorization ``((p, e), ...)``; meant for small ``n``."""
    if n < 1:
        raise ValueError(f"cannot factor {n}")
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def is_squarefree(n: int) -> bool:
    return all(e == 1 for _, e in prime_factors(n))


def mobius(n: int) -> int:
    fac = prime_factors(n)
    if any(e > 1 for _, e in fac):
        return 0
    return -1 if len(fac) % 2 else 1


def totient_squarefree(primes: Sequence[int]) -> int:
    return math.prod(p - 1 for p in primes)


def crt_pair(r1: int, m1: int, r2: int, m2: int) -> int:
    """The residue mod ``m1*m2`` congruent to ``r1`` mod ``m1`` and ``r2`` mod ``m2``."""
    t = ((r2 - r1) * pow(m1, -1, m2)) % m2
    return (r1 + m1 * t) % (m1 * m2)


def stable_sum(values: np.ndarray, block: int = 256) -> float:
    """Sum fixed-size blocks, then merge the partials with ``math.fsum``.

    The partition depends only on ``block``, so the result is reproducible
    bit for bit however the caller produced the array.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    parts = np.add.reduceat(values, np.arange(0, values.size, block))
    return math.fsum(parts.tolist())


def squarefree_products(
    primes: Sequence[int], bound: float, max_factors: int | None = None
) -> Iterator[tuple[int, tuple[int, ...]]]:
    """Yield ``(d, factors)`` for every square-free ``d <= bound`` built from ``primes``.

    ``factors`` is increasing. ``d = 1`` (no factors) is included.
    """
    ps = sorted(int(p) for p in primes)
    cap = len(ps) if max_factors is None else max_factors

    def rec(start: int, d: int, fac: tuple[int, ...]):
        yield d, fac
        if len(fac) >= cap:
            return
        for i in range(start, len(ps)):
            nd = d * ps[i]
            if nd > bound:
                break
            yield from rec(i + 1, nd, fac + (ps[i],))

    yield from rec(0, 1, ())
