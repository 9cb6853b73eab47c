import math
import random
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr

from newtonseries.core import DomainError, Interval, real, working_precision
from newtonseries.newton import (
    ClosedFormMismatch,
    InvalidCertificate,
    NodeCollisionError,
    NoValidB,
    Status,
    default_b,
    eval_series,
    expand,
    fit_decay_slope,
    log_spaced,
    ratio_table,
    remainder_identity_check,
    taylor_eval,
)
from newtonseries.registry import FuncHandle, MissingDerivativeError, lookup, lookup_spec

recip = lookup("recip")
log = lookup("log")
neg_exp = lookup("neg_exp")
sin_pi = lookup("sin_pi")


def test_recip_coefficients():
    exp = expand(recip, 1, 50)
    assert exp.table.source == "closed-form"
    for k in range(51):
        want = real(Fraction((-1) ** k, math.comb(1 + k, k)), 200)
        assert abs(exp.coefficient(k) - want) <= abs(want) * mpfr(2) ** -120


def test_sin_pi_coefficients_vanish():
    exp = expand(sin_pi, 1, 30)
    for k in range(31):
        assert abs(exp.coefficient(k)) <= 16 * exp.table.error_bound[k] + mpfr(2) ** -120


def test_log_first_coefficients():
    exp = expand(log, 1, 5)
    assert exp.coefficient(0) == 0
    with working_precision(200):
        assert abs(exp.coefficient(1) - gmpy2.log(mpfr(2))) < mpfr(2) ** -120


def test_term_and_partial_sum():
    exp = expand(recip, 1, 10)
    with working_precision(200):
        total = sum(exp.term(k, "2.5") for k in range(6))
    assert abs(exp.partial_sum("2.5", 6) - total) < mpfr(2) ** -120
    with pytest.raises(ValueError):
        exp.partial_sum(2, 20)


def test_expand_requires_right_unbounded_domain():
    short = FuncHandle("short", Interval.closed(0, 10), lambda x, p: x)
    with pytest.raises(DomainError):
        expand(short, 1, 3)
    with pytest.raises(DomainError):
        expand(recip, -1, 3)


def test_closed_form_mismatch_is_an_error():
    def bad(a, K, prec):
        with working_precision(prec):
            vals = recip.closed_form(a, K, prec)
            vals[3] = vals[3] * (1 + mpfr("1e-20"))
            return vals

    broken = FuncHandle("recip", recip.domain, recip.evaluator, recip.derivative, bad)
    with pytest.raises(ClosedFormMismatch):
        expand(broken, 1, 20)


# ---- eval --------------------------------------------------------------------

def test_finite_exact():
    rep = eval_series(expand(recip, 1, 100), 4, 1e-12, 100)
    assert rep.status is Status.FINITE_EXACT
    assert rep.terms_used == 4
    assert rep.value == mpfr("0.25")


def test_finite_exact_with_decimal_anchor():
    rep = eval_series(expand(recip, "4.3", 100), "7.3", 1e-12, 100)
    assert rep.status is Status.FINITE_EXACT and rep.terms_used == 4


def test_certified_convergence_far_right():
    exp = expand(recip, 1, 10 ** 4, 256)
    rep = eval_series(exp, "7.3", 1e-10, 10 ** 4, b="0.6", q=0)
    assert rep.status is Status.CONVERGED_BOUNDED
    with working_precision(256):
        assert abs(rep.value - 1 / mpfr("7.3")) <= rep.remainder_bound
    assert abs(rep.b_used - mpfr("0.6", 256)) < mpfr(2) ** -250


def test_certified_eval_to_the_left_reports_honest_bound():
    # x = 2.5, b = 0.5: the bound decays like n^-2, so 1e-12 is out of reach in 10^4 terms
    exp = expand(recip, 1, 10 ** 4, 256)
    rep = eval_series(exp, "2.5", 1e-12, 10 ** 4, b="0.5", q=0)
    assert rep.status is Status.MAX_TERMS
    with working_precision(256):
        err = abs(rep.value - mpfr("0.4"))
    assert err <= rep.remainder_bound
    assert err < 1e-10


def test_remainder_bound_monotone_and_valid():
    exp = expand(recip, 1, 2000, 256)
    x, b = mpfr("3.6", 256), mpfr("0.7", 256)
    bounds = []
    for n in (5, 10, 20, 50, 100, 400):
        rep = eval_series(exp, x, 1e-300, n, b=b, q=0)
        bounds.append(rep.remainder_bound)
        ref = eval_series(exp, x, 1e-300, 4 * n).value
        assert abs(rep.value - ref) <= rep.remainder_bound
    assert all(later <= earlier for earlier, later in zip(bounds, bounds[1:]))


def test_divergence_detected():
    rep = eval_series(expand(lookup_spec("power_base[c=2]"), 0, 1000), "0.5", 1e-10, 1000)
    assert rep.status is Status.DIVERGED
    assert rep.terms_used <= 1000


@pytest.mark.parametrize("x", ["0.3", "-2.2", "4.75"])
def test_geometric_case_converges(x):
    exp = expand(lookup_spec("power_base[c=0.5]"), 0, 1000)
    rep = eval_series(exp, x, 1e-12, 1000)
    assert rep.status is Status.CONVERGED_HEURISTIC
    with working_precision(200):
        want = gmpy2.exp(mpfr(x) * gmpy2.log(mpfr("1.5")))
    assert abs(rep.value - want) < 1e-10


def test_sin_pi_flagged_not_certified():
    exp = expand(sin_pi, 1, 200)
    for x in ("1.5", "2.25", "7.1"):
        rep = eval_series(exp, x, 1e-12, 200)
        assert rep.status is Status.CONVERGED_HEURISTIC
        assert "identically_zero_series" in rep.flags
        assert abs(rep.value) < 1e-30
    rep = eval_series(exp, "1.5", 1e-12, 200, b="0.5", q=0)
    assert rep.status is not Status.CONVERGED_BOUNDED
    assert "certificate_inconsistent" in rep.flags


def test_anchor_shift_consistency():
    e1 = expand(recip, 1, 4000, 256)
    e2 = expand(recip, 2, 4000, 256)
    for x in ("5.5", "9.25"):
        r1 = eval_series(e1, x, 1e-14, 4000, b="0.5", q=0)
        r2 = eval_series(e2, x, 1e-14, 4000, b="0.5", q=0)
        assert abs(r1.value - r2.value) <= r1.remainder_bound + r2.remainder_bound


def test_invalid_certificates():
    exp = expand(recip, 1, 50)
    with pytest.raises(InvalidCertificate):
        eval_series(exp, "2.5", 1e-8, 50, b="1.5", q=0)
    with pytest.raises(InvalidCertificate):
        eval_series(exp, "2.5", 1e-8, 50, b="-1", q=0)
    with pytest.raises(InvalidCertificate):
        eval_series(exp, "2.5", 1e-8, 50, b="0.5")
    with pytest.raises(InvalidCertificate):
        eval_series(exp, "2.5", 1e-8, 50, q=99)


def test_default_b():
    pos = Interval.positive_reals()
    assert default_b(pos, mpfr(1), mpfr(3)) == mpfr("0.5")
    assert default_b(pos, mpfr(2), mpfr("0.4")) == mpfr("0.2")
    assert default_b(Interval.real_line(), mpfr(0), mpfr(1)) == mpfr("-0.5")


def test_eval_outside_domain():
    with pytest.raises(DomainError):
        eval_series(expand(recip, 1, 10), -1)


# ---- remainder identity --------------------------------------------------------

def test_remainder_identity_examples():
    assert remainder_identity_check(recip, 1, "2.5", 6) <= 1e-30
    assert remainder_identity_check(log, 1, "3.7", 10) <= 1e-28
    for f in (recip, log, neg_exp):
        assert remainder_identity_check(f, 1, "2.2", 0) == 0


def test_remainder_identity_random():
    rng = random.Random(2024)
    for _ in range(50):
        f = rng.choice([recip, log, neg_exp, lookup_spec("power_base[c=0.5]")])
        a = round(rng.uniform(0.5, 4), 4)
        x = round(rng.uniform(0.3, 9), 4)
        n = rng.randint(0, 20)
        d = x - a
        if abs(d - round(d)) < 1e-3 and 0 <= round(d) < n:
            continue
        assert remainder_identity_check(f, a, x, n) <= 1e-28


def test_remainder_identity_rejects_node_hit():
    with pytest.raises(NodeCollisionError):
        remainder_identity_check(recip, 1, 3, 5)


# ---- Taylor comparison ---------------------------------------------------------

def test_taylor_neg_exp():
    res = taylor_eval(neg_exp, 0, 1, 30, monotone="cm")
    with working_precision(200):
        err = abs(res.partial_sum - gmpy2.exp(mpfr(-1)))
    assert err <= res.bound
    assert res.b < 0


def test_taylor_recip_bound_is_geometric():
    res = taylor_eval(recip, 2, "1.5", 40, monotone="cm")
    with working_precision(200):
        ratio = mpfr("0.5") / abs(res.b - 2)
        scale = abs(recip(res.b, 200))
        assert abs(res.bound - ratio ** 40 * scale) <= res.bound * mpfr("1e-30")
        assert abs(res.partial_sum - 1 / mpfr("1.5")) <= res.bound


def test_taylor_at_anchor():
    res = taylor_eval(log, 2, 2, 5, monotone="am", q=1)
    assert res.bound == 0
    with working_precision(200):
        assert abs(res.partial_sum - gmpy2.log(mpfr(2))) < mpfr(2) ** -120


def test_taylor_needs_derivatives_and_room():
    with pytest.raises(MissingDerivativeError):
        taylor_eval(lookup("log_over_x_neg"), 1, 2, 3)
    with pytest.raises(NoValidB):
        taylor_eval(recip, 1, 3, 5, monotone="cm")


# ---- falling-factorial ratio -------------------------------------------------------

def test_ratio_examples():
    assert all(lg == 0 for _, lg, _ in ratio_table("0.5", 1, "0.5", range(0, 50)))
    rows = ratio_table(4, 1, 0, range(0, 8))
    assert [s for _, _, s in rows][4:] == [0, 0, 0, 0]
    assert all(s != 0 for _, _, s in rows[:4])


@pytest.mark.parametrize("x,b", [("2.3", "0.5"), ("3.7", "0.5"), ("1.5", "-0.25")])
def test_decay_slope_is_minus_x_minus_b(x, b):
    slope = fit_decay_slope(ratio_table(x, 1, b, log_spaced(100, 10 ** 4, 12)))
    assert abs(slope + (float(x) - float(b))) <= 0.1


def test_decay_slope_undefined_when_ratio_vanishes():
    # x - a is a whole number: the ratio is exactly zero from n = x - a + 1 on
    assert math.isnan(fit_decay_slope(ratio_table(2, 1, "0.5", log_spaced(100, 10 ** 4, 12))))
