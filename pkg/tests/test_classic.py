import math
from fractions import Fraction

import numpy as np
import pytest

from gpysieve.classic import (
    MainTermInapplicable,
    SieveParams,
    big_lambda_r,
    bv_sum,
    e_star,
    gpy_factor,
    lambda_r,
    lemma1_main_term,
    lemma1_report,
    lemma2_main_term,
    lemma2_report,
    optimize_kl,
    range_weights,
    theta_star,
    varpi,
)
from gpysieve.tuples import AdmissibleTuple

import oracles

TWIN = AdmissibleTuple.of([0, 2])


def test_params_validation():
    with pytest.raises(ValueError):
        SieveParams(100, 10.0, 2, 3)
    with pytest.raises(ValueError):
        SieveParams(100, 0.5, 2, 1)
    with pytest.raises(ValueError):
        SieveParams(100, 10.0, 2, 1, theta=1.5)
    with pytest.raises(ValueError):
        SieveParams(100, 10.0, 3, 1).check_tuple(TWIN)


def test_lambda_r_values():
    p = SieveParams(1000, 30.0, 2, 1)
    assert lambda_r(1, p) == pytest.approx(math.log(30) ** 3 / 6)
    assert lambda_r(6, p) == pytest.approx(math.log(5) ** 3 / 6)
    assert lambda_r(4, p) == 0.0
    assert lambda_r(31, p) == 0.0
    assert lambda_r(30, p) == 0.0  # log(R/R) = 0


@pytest.mark.parametrize("hs", [[0, 2], [0, 2, 6]])
def test_big_lambda_against_naive(hs):
    t = AdmissibleTuple.of(hs)
    p = SieveParams(2000, 60.0, t.k, 1)
    for n in range(2001, 2200):
        assert big_lambda_r(n, t, p) == pytest.approx(oracles.big_lambda_r(n, hs, 60.0, t.k, 1), rel=1e-9, abs=1e-9)


def test_range_weights_pointwise_and_jobs():
    p = SieveParams(3000, 50.0, 2, 2)
    arr = range_weights(TWIN, p)
    for n in (3001, 3017, 3500, 4999, 6000):
        assert arr[n - 3001] == pytest.approx(big_lambda_r(n, TWIN, p), rel=1e-9, abs=1e-9)
    assert np.array_equal(arr, range_weights(TWIN, p, jobs=3))


def test_varpi_and_theta_star():
    assert varpi(13) == pytest.approx(math.log(13))
    assert varpi(15) == 0.0
    # primes in (10, 20] that are 1 mod 3: 13, 19
    assert theta_star(10, 1, 3) == pytest.approx(math.log(13) + math.log(19))
    assert e_star(10, 1, 3) == pytest.approx(math.log(13 * 19) - 5)
    with pytest.warns(MainTermInapplicable):
        e_star(10, 3, 3)


def test_bv_sum_exact_dominates_grid():
    lo = bv_sum(300, 0.5, grid=50)
    hi = bv_sum(300, 0.5, exact=True)
    assert 0 < lo <= hi + 1e-12


def test_main_terms_closed_form():
    assert lemma1_main_term(1.0, 2, 1, 10, math.e) == pytest.approx(10 * 2 / math.factorial(4))
    assert lemma2_main_term(1.0, 2, 1, 10, math.e) == pytest.approx(10 * 6 / math.factorial(5))


def test_lemma_reports_run():
    p = SieveParams(20_000, 20_000**0.25, 2, 1)
    r1 = lemma1_report(TWIN, p)
    r2 = lemma2_report(TWIN, p, 0)
    assert 0.3 < r1.ratio < 3 and 0.3 < r2.ratio < 3
    with pytest.raises(ValueError):
        lemma2_report(TWIN, p, 4)


def test_lemma2_membership_identity():
    # on n + h prime the h-coordinate never restricts small moduli
    p = SieveParams(20_000, 20.0, 2, 1)
    a = lemma2_report(TWIN, p, 0).empirical
    b = lemma2_report(TWIN, p, 0, membership=TWIN.without(0)).empirical
    assert a == pytest.approx(b, rel=1e-12)


def test_gpy_factor_exact():
    assert gpy_factor(7, 1, 1) == Fraction(1, 20)
    assert gpy_factor(1, 1, Fraction(1, 2)) == Fraction(-13, 16)
    assert isinstance(gpy_factor(7, 1, 1.0), float)
    with pytest.raises(ValueError):
        gpy_factor(2, 3, 1)


def test_optimize_half_has_no_positive_factor():
    k, ell, f = optimize_kl(Fraction(1, 2), 2000)
    assert f < 0 and k == 2000


def test_optimize_float_theta_is_read_as_decimal():
    assert optimize_kl(0.51, 50) == optimize_kl("0.51", 50)
    with pytest.raises(ValueError):
        optimize_kl(1, 0)


def test_optimize_brute_grid():
    th = Fraction(3, 4)
    best = max(gpy_factor(k, l, th) for k in range(1, 30) for l in range(1, k + 1))
    assert optimize_kl(th, 29)[2] == best
