import math
import random
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from newtonseries.core import DomainError, Interval, real, working_precision
from newtonseries.finitediff import (
    DuplicateNodeError,
    Membership,
    binomial_sum_difference,
    build_table,
    divided_difference,
    dp_membership,
    table_precision,
)
from newtonseries.registry import from_callable, lookup

recip = lookup("recip")
log = lookup("log")
neg_exp = lookup("neg_exp")
square = from_callable("square", lambda x, p: x * x, Interval.real_line())


def exact_recip_dd(nodes) -> Fraction:
    """1/x on nodes x_0..x_n has divided difference (-1)^n / prod x_i."""
    prod = Fraction(1)
    for x in nodes:
        prod *= x
    return Fraction((-1) ** (len(nodes) - 1)) / prod


def test_table_examples():
    t = build_table(recip, 1, 2)
    with working_precision(200):
        assert abs(t[2] - mpfr(1) / 3) < mpfr(2) ** -128
    for f, a in ((recip, "2.5"), (log, 3), (neg_exp, -1)):
        t0 = build_table(f, a, 0)
        assert t0[0] == f(a, t0.working_precision)


def test_neg_exp_order_20():
    t = build_table(neg_exp, 1, 20, 128)
    with working_precision(300):
        e = gmpy2.exp(mpfr(-1))
        want = e * (e - 1) ** 20
    assert abs(t[20] - want) <= abs(want) * mpfr("1e-20")


def test_guard_bits():
    assert table_precision(128, 50) == 128 + 50 + 32
    assert build_table(recip, 1, 50, 128).working_precision == 210


@pytest.mark.parametrize("a", [Fraction(1), Fraction(3, 2), Fraction(17, 4)])
def test_error_bounds_cover_exact_differences(a):
    t = build_table(recip, real(a, 400), 40, 128)
    for k in range(41):
        nodes = [a + j for j in range(k + 1)]
        exact = exact_recip_dd(nodes) * math.factorial(k)
        assert abs(t[k] - real(exact, 600)) <= t.error_bound[k]


@pytest.mark.parametrize("f,a", [(recip, "1.5"), (log, "2"), (neg_exp, "-0.5")])
def test_rebuild_consistency(f, a):
    K = 15
    t = build_table(f, a, K, 128)
    with working_precision(400):
        shifted = build_table(f, mpfr(a, 400) + 1, K - 1, 128)
        for k in range(K):
            # Delta^k f(a+1) = Delta^k f(a) + Delta^{k+1} f(a)
            slack = t.error_bound[k] + t.error_bound[k + 1] + shifted.error_bound[k]
            assert abs(shifted[k] - (t[k] + t[k + 1])) <= 4 * slack


@pytest.mark.parametrize("f,a", [(recip, "1.25"), (log, "3.5"), (neg_exp, "0")])
def test_binomial_expansion_identity(f, a):
    t = build_table(f, a, 12, 128)
    for k in range(13):
        direct = binomial_sum_difference(f, a, k, 128)
        # the direct sum carries k + 32 guard bits; its weights total 2^k
        scale = max(abs(f(mpfr(a, 200) + j, 200)) for j in range(k + 1))
        direct_err = mpfr(2) ** (k + 1 - table_precision(128, k)) * scale
        assert abs(direct - t[k]) <= t.error_bound[k] + direct_err


def test_divided_difference_examples():
    assert divided_difference(recip, [4], 128).value == mpfr("0.25")
    with working_precision(200):
        assert abs(divided_difference(recip, [1, 2, 3], 128).value - mpfr(1) / 6) < mpfr(2) ** -125
    rng = random.Random(11)
    for _ in range(10):
        nodes = [rng.uniform(-10, 10) for _ in range(3)]
        assert abs(divided_difference(square, nodes, 128).value - 1) < mpfr(2) ** -100


@settings(max_examples=80, deadline=None)
@given(st.lists(st.fractions(min_value=Fraction(1, 10), max_value=50, max_denominator=40),
                min_size=1, max_size=8, unique=True))
def test_recip_divided_difference_exact_oracle(nodes):
    xs = sorted(nodes)
    if any(b - a < Fraction(1, 200) for a, b in zip(xs, xs[1:])):
        return
    got = divided_difference(recip, [real(x, 256) for x in nodes], 256).value
    want = real(exact_recip_dd(nodes), 256)
    assert abs(got - want) <= abs(want) * mpfr("1e-40")


@pytest.mark.parametrize("f,a", [(recip, 1), (log, "2.5"), (neg_exp, "-1")])
def test_unit_spaced_divided_difference_matches_table(f, a):
    t = build_table(f, a, 20, 256)
    for n in range(21):
        with working_precision(400):
            nodes = [mpfr(a) + j for j in range(n + 1)]
            dd = divided_difference(f, nodes, 256 + 40 + 2 * n).value
            want = t[n] / math.factorial(n)
        assert abs(dd - want) <= abs(want) * mpfr("1e-20") + mpfr("1e-60")


def test_permutation_invariance():
    rng = random.Random(5)
    nodes = [mpfr(rng.uniform(0.5, 9), 128) for _ in range(6)]
    ref = divided_difference(log, nodes, 128).value
    for _ in range(10):
        rng.shuffle(nodes)
        assert divided_difference(log, nodes, 128).value == ref


def test_duplicate_nodes_rejected():
    with pytest.raises(DuplicateNodeError):
        divided_difference(recip, [1, 2, 2], 128)


def test_out_of_domain_node():
    with pytest.raises(DomainError):
        divided_difference(recip, [-1, 2], 128)
    with pytest.raises(DomainError):
        build_table(recip, -3, 5)


@pytest.mark.parametrize("f,p,verdict", [
    (log, 1, Membership.MEMBER),
    (log, 0, Membership.NON_MEMBER),
    (recip, 0, Membership.MEMBER),
    (lookup("power_base", {"c": "1"}), 3, Membership.NON_MEMBER),
])
def test_dp_membership(f, p, verdict):
    rep = dp_membership(f, p, 2 ** 20, 1e-4)
    assert rep.verdict is verdict
    assert rep.heuristic


def test_dp_membership_inconclusive_when_too_slow():
    # ln ln n grows without bound, so it must never read as tending to zero
    slow = from_callable("loglog", lambda x, p: gmpy2.log(gmpy2.log(x + 2)), Interval.positive_reals())
    rep = dp_membership(slow, 0, 2 ** 10, 1e-4)
    assert rep.verdict is not Membership.MEMBER
