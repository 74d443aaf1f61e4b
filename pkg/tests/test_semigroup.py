import math
from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpysieve.arith import ResourceError
from gpysieve.semigroup import (
    EmptyBucketError,
    IntervalScheme,
    PrimeBuckets,
    default_scheme,
    delta,
    delta_star,
    enumerate_elements,
    interval_of,
    members,
    mu,
    phi,
    phi_star,
    psi,
)
from gpysieve.tuples import AdmissibleTuple

import oracles

TWIN = AdmissibleTuple.of([0, 2])
DESK = IntervalScheme.of(20, 2)


def test_endpoints_exact():
    assert DESK.endpoint(1) == 40 and DESK.lower(1) == 20
    assert DESK.size((1, 3)) == 40 * 160
    assert DESK.generators(320) == [1, 2, 3, 4]
    assert DESK.generators(319.9) == [1, 2, 3]
    assert DESK.generators(39) == []
    s = IntervalScheme.of(4.5, 2)
    assert s.endpoint(2) == Fraction(18)


def test_bad_scheme():
    with pytest.raises(ValueError):
        IntervalScheme.of(1.0, 2.0)


def test_default_scheme():
    s = default_scheme(1e30)
    L = math.log(math.log(1e30))
    assert s.log_R0 == pytest.approx(math.log(1e30) / L**0.2)
    assert s.log_R1 == pytest.approx(math.log(1e30) / L**0.9)
    huge = default_scheme(log_R=1e5)
    assert not huge.exact and huge.log_R0 > 700
    with pytest.raises(ValueError):
        default_scheme(10.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5000))
def test_interval_of_matches_definition(p):
    j = interval_of(p, DESK)
    if p <= 20:
        assert j is None
    else:
        assert 20 * 2 ** (j - 1) < p <= 20 * 2**j


def test_enumeration_matches_subsets():
    R, z = 10_000, 320
    gens = [j for j in range(1, 20) if 20 * 2**j <= z]
    want = sorted(
        D
        for r in range(len(gens) + 1)
        for D in combinations(gens, r)
        if math.prod((20 * 2**j for j in D), start=1) <= R
    )
    assert sorted(enumerate_elements(DESK, z, R)) == want
    assert list(enumerate_elements(DESK, z, R))[0] == ()
    with pytest.raises(ResourceError):
        list(enumerate_elements(IntervalScheme.of(2, 1.01), 1e6, 1e12, cap=1000))


def test_buckets_and_members():
    b = PrimeBuckets(DESK, TWIN, 320)
    assert b.primes(1).tolist() == [p for p in oracles.naive_primes(40) if p > 20]
    ms = sorted(members((1, 2), b))
    assert len(ms) == len(b.primes(1)) * len(b.primes(2))
    assert all(any(m % p == 0 for p in b.primes(2).tolist()) for m in ms)
    with pytest.raises(KeyError):
        b.primes(5)


def test_functionals_against_naive():
    b = PrimeBuckets(DESK, TWIN, 320)
    for D in [(), (1,), (2, 4), (1, 2, 3)]:
        d_prod, p_prod = 1.0, 1.0
        for j in D:
            ps = [p for p in oracles.naive_primes(20 * 2**j) if p > 20 * 2 ** (j - 1)]
            f = [oracles.nu([0, 2], p) / p for p in ps]
            d_prod *= sum(f)
            p_prod *= sum(x * (1 - x) for x in f) / sum(f) ** 2
            fs = [(oracles.nu([0, 2], p) - 1) / (p - 1) for p in ps]
            assert delta_star((j,), TWIN, b) == pytest.approx(sum(fs))
        assert delta(D, TWIN, b) == pytest.approx(d_prod, rel=1e-13)
        assert phi(D, TWIN, b) == pytest.approx(p_prod, rel=1e-13)
        assert mu(D) == (-1) ** len(D)
    assert psi(1, TWIN, b) == pytest.approx(1 / (1 + phi((1,), TWIN, b)))
    assert 0 < phi_star((1,), TWIN, b)


def test_empty_bucket():
    s = IntervalScheme.of(20, 1.05)
    b = PrimeBuckets(s, TWIN, 30)
    empty = [j for j in b.indices if b.primes(j).size == 0]
    assert empty
    with pytest.raises(EmptyBucketError):
        b.delta1(empty[0])


def test_star_needs_two_classes():
    t = AdmissibleTuple.of([0, 30])  # one class mod 2, 3, 5 only; ok above 30
    b = PrimeBuckets(IntervalScheme.of(2.5, 2), t, 10)
    with pytest.raises(ValueError):
        delta_star((1,), t, b)  # 3 and 5 sit in the first interval


def test_tuple_mismatch():
    b = PrimeBuckets(DESK, TWIN, 320)
    with pytest.raises(ValueError):
        delta((1,), AdmissibleTuple.of([0, 6]), b)
