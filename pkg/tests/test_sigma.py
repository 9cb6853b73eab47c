import math

import gmpy2
import pytest
from gmpy2 import mpfr

from newtonseries import oracles
from newtonseries.core import DomainError, Interval, working_precision
from newtonseries.newton import Status
from newtonseries.registry import from_callable, lookup
from newtonseries.sigma import (
    INTEGER_SUMS,
    SigmaRequest,
    SigmaStatus,
    difference_equation_check,
    f_np,
    select_p,
    sigma_eval,
    sigma_handle,
    stern_series,
    wellposedness_check,
)

log = lookup("log")
recip = lookup("recip")
log_over_x_neg = lookup("log_over_x_neg")


def test_f_np_small_n():
    # f_2^0[g](1) = g(1) - (g(1) + g(2)) = -g(2)
    for g in (log, recip, log_over_x_neg):
        with working_precision(200):
            assert abs(f_np(g, 0, 2, 1) + g(2, 200)) < mpfr(2) ** -120


def test_f_np_gauss_limit_term():
    # p = 1 for ln: sum ln k (k < n) - sum ln(x+k) (k < n) + x ln n
    n, x = 50, mpfr("0.7", 200)
    with working_precision(200):
        direct = sum(gmpy2.log(mpfr(k)) for k in range(1, n)) \
            - sum(gmpy2.log(x + k) for k in range(n)) + x * gmpy2.log(mpfr(n))
    assert abs(f_np(log, 1, n, x) - direct) < mpfr(2) ** -110


def test_f_np_recip_approaches_one():
    assert abs(f_np(recip, 0, 10 ** 4, 2) - 1) < 2e-4


def test_sigma_examples():
    res = sigma_eval(SigmaRequest(log, mpfr(3), 1e-8))
    with working_precision(128):
        assert abs(res.value - gmpy2.log(mpfr(2))) < 1e-8
    assert res.status is SigmaStatus.CONVERGED
    res = sigma_eval(SigmaRequest(log, mpfr("0.5"), 1e-6))
    assert abs(res.value - oracles.log_gamma("0.5")) < 1e-6
    res = sigma_eval(SigmaRequest(recip, mpfr(2), 1e-8))
    assert abs(res.value - 1) < 1e-8


@pytest.mark.parametrize("x", ["0.25", "1.5", "6.8"])
def test_sigma_log_matches_log_gamma(x):
    res = sigma_eval(SigmaRequest(log, mpfr(x, 128), 1e-9, p=3))
    assert abs(res.value - oracles.log_gamma(x)) < 1e-8


@pytest.mark.parametrize("x", ["0.4", "2.5", "9.1"])
def test_sigma_recip_matches_digamma(x):
    res = sigma_eval(SigmaRequest(recip, mpfr(x, 128), 1e-9))
    assert abs(res.value - oracles.harmonic(mpfr(x, 128) - 1)) < 1e-8


@pytest.mark.parametrize("g", [log, recip, log_over_x_neg])
def test_normalization(g):
    tol = 1e-8
    res = sigma_eval(SigmaRequest(g, mpfr(1), tol))
    assert abs(res.value) <= 10 * tol
    assert res.normalization_residual <= 10 * tol


@pytest.mark.parametrize("g", [log, recip, log_over_x_neg])
@pytest.mark.parametrize("m", [2, 3, 5])
def test_integer_values_telescope(g, m):
    tol = 1e-8
    res = sigma_eval(SigmaRequest(g, mpfr(m), tol))
    with working_precision(128):
        want = sum(g(mpfr(k), 128) for k in range(1, m))
    assert abs(res.value - want) <= 10 * tol


@pytest.mark.parametrize("g,p", [(log, 1), (recip, 0)])
def test_p_insensitivity(g, p):
    tol = 1e-7
    lo = sigma_eval(SigmaRequest(g, mpfr("2.6"), tol, p=p + 1))
    hi = sigma_eval(SigmaRequest(g, mpfr("2.6"), tol, p=p + 3))
    assert abs(lo.value - hi.value) <= 2 * tol


def test_auto_p():
    assert select_p(recip) == 0
    assert select_p(log) == 1
    res = sigma_eval(SigmaRequest(log, mpfr(2), 1e-6))
    assert res.p_min == 1 and res.p_used == 3


def test_p_rejected():
    grow = from_callable("exp", lambda x, p: gmpy2.exp(x), Interval.positive_reals())
    res = sigma_eval(SigmaRequest(grow, mpfr(2), 1e-6))
    assert res.status is SigmaStatus.P_REJECTED


def test_max_n_reported():
    res = sigma_eval(SigmaRequest(recip, mpfr("2.5"), 1e-14, p=0, n_max=2 ** 10))
    assert res.status is SigmaStatus.MAX_N
    assert res.n_final == 2 ** 10


def test_empirical_rate_and_extrapolation():
    res = sigma_eval(SigmaRequest(recip, mpfr("2.5"), 1e-10, p=0, n_max=2 ** 14, extrapolate=True))
    assert res.empirical_rate == pytest.approx(1.0, abs=0.05)
    exact = oracles.harmonic(mpfr("1.5", 128))
    assert abs(res.extrapolated - exact) < abs(res.value - exact)


def test_wellposedness():
    ns = [2 ** k for k in range(8, 17)]
    vals = wellposedness_check(log, 1, 3, "2.5", ns)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4
    vals = wellposedness_check(recip, 0, 2, "1.5", ns[:6])
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(v == 0 for v in wellposedness_check(log, 2, 2, "1.5", ns[:3]))


@pytest.mark.parametrize("g,x,tol", [(log, "2", 1e-8), (recip, "1.5", 1e-8), (log_over_x_neg, "2", 1e-6)])
def test_difference_equation(g, x, tol):
    rep = difference_equation_check(g, x, tol)
    assert rep.residual < 4 * tol


def test_sigma_domain():
    with pytest.raises(DomainError):
        sigma_eval(SigmaRequest(log, mpfr(-1), 1e-6))


def test_stern_series():
    rep = stern_series(2)
    assert rep.status is Status.FINITE_EXACT and rep.value == 1
    assert stern_series(1).value == 0
    rep = stern_series("3.5", 1e-9)
    want = 2 - 2 * math.log(2) + 1 / 1.5 + 1 / 2.5
    assert abs(float(rep.value) - want) < 1e-7
    assert abs(rep.value - oracles.harmonic(mpfr("2.5", 128))) < 1e-7


def test_sigma_handle_and_memo():
    h = sigma_handle(log, tol=1e-10, p=6)
    with working_precision(128):
        assert abs(h(4, 128) - gmpy2.log(mpfr(6))) < 1e-9
    INTEGER_SUMS.clear()
    a = f_np(log, 2, 300, "1.5")
    b = f_np(log, 2, 300, "1.5")
    assert a == b
