"""Reference values for ln Gamma, digamma, harmonic numbers and Euler's constant.

These routines are the yardstick the summation and series engines are checked
against, so they only use textbook methods (Stirling-type asymptotic series
after an argument shift, Brent-McMillan for gamma) and never import the
engines themselves.
"""

from __future__ import annotations

import math
import threading
from fractions import Fraction
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr

from .core import DEFAULT_PRECISION, DomainError, check_precision, working_precision

_GUARD = 32


@lru_cache(maxsize=None)
def bernoulli(m: int) -> Fraction:
    """Bernoulli number B_m (B_1 = -1/2), exact."""
    return _bernoulli_table(m)[m]


@lru_cache(maxsize=8)
def _bernoulli_table(upto: int) -> tuple[Fraction, ...]:
    upto = max(upto, 1)
    # round the table size up so neighbouring requests share work
    size = 1 << (upto.bit_length())
    b = [Fraction(1)]
    for m in range(1, size + 1):
        acc = Fraction(0)
        binom = 1
        for k in range(m):
            acc += binom * b[k]
            binom = binom * (m + 1 - k) // (k + 1)
        b.append(-acc / (m + 1))
    return tuple(b)


def _shift_target(precision: int) -> int:
    return max(20, math.ceil(20 * precision / 128))


def _stirling_tail(z: mpfr, precision: int, power_offset: int, denom) -> mpfr:
    """Sum B_2k / (denom(k) z^(2k - power_offset)) until the terms stall.

    The series is enveloping for real z > 0: the error never exceeds the
    first omitted term, so stopping once a term is below 2^-(precision+8)
    (or once terms start growing) is a valid error majorant check.
    """
    eps = mpfr(2) ** (-(precision + 8))
    z2 = z * z
    zpow = z ** (2 - power_offset)
    total = mpfr(0)
    prev = None
    k = 1
    while True:
        b = bernoulli(2 * k)
        term = mpfr(b.numerator) / (mpfr(b.denominator) * denom(k) * zpow)
        mag = abs(term)
        if prev is not None and mag > prev:
            raise ArithmeticError("asymptotic series stalled before reaching target accuracy")
        total += term
        if mag < eps:
            return total
        prev = mag
        zpow *= z2
        k += 1


def log_gamma(x, precision: int = DEFAULT_PRECISION) -> mpfr:
    """ln Gamma(x) for x > 0."""
    precision = check_precision(precision)
    work = precision + _GUARD
    with working_precision(work):
        x = mpfr(x)
        if not x > 0:
            raise DomainError(f"log_gamma needs x > 0, got {x}")
        target = _shift_target(precision)
        m = max(0, math.ceil(target - float(x)))
        z = x + m
        half_log_2pi = gmpy2.log(2 * gmpy2.const_pi()) / 2
        val = (z - mpfr(0.5)) * gmpy2.log(z) - z + half_log_2pi
        val += _stirling_tail(z, work, 1, lambda k: (2 * k) * (2 * k - 1))
        if m:
            # ln Gamma(x) = ln Gamma(x+m) - ln(x (x+1) ... (x+m-1))
            prod = mpfr(1)
            for j in range(m):
                prod *= x + j
            val -= gmpy2.log(prod)
    return mpfr(val, precision)


def digamma(x, precision: int = DEFAULT_PRECISION) -> mpfr:
    """psi(x) = Gamma'(x)/Gamma(x) for x > 0."""
    precision = check_precision(precision)
    work = precision + _GUARD
    with working_precision(work):
        x = mpfr(x)
        if not x > 0:
            raise DomainError(f"digamma needs x > 0, got {x}")
        m = max(0, math.ceil(_shift_target(precision) - float(x)))
        z = x + m
        val = gmpy2.log(z) - 1 / (2 * z)
        val -= _stirling_tail(z, work, 0, lambda k: 2 * k)
        # psi(x) = psi(x+m) - sum 1/(x+j)
        val -= gmpy2.fsum([1 / (x + j) for j in range(m)])
    return mpfr(val, precision)


def harmonic(x, precision: int = DEFAULT_PRECISION) -> mpfr:
    """Harmonic number function H_x = psi(x+1) + gamma, for x > -1."""
    with working_precision(precision + _GUARD):
        x = mpfr(x)
        if not x > -1:
            raise DomainError(f"harmonic needs x > -1, got {x}")
        val = digamma(x + 1, precision + _GUARD) + euler_gamma(precision + _GUARD)
    return mpfr(val, precision)


_gamma_cache: dict[int, mpfr] = {}
_gamma_lock = threading.Lock()


def euler_gamma(precision: int = DEFAULT_PRECISION) -> mpfr:
    """Euler's constant, computed once per precision by Brent-McMillan."""
    precision = check_precision(precision)
    cached = _gamma_cache.get(precision)
    if cached is not None:
        return cached
    with _gamma_lock:
        if precision not in _gamma_cache:
            _gamma_cache[precision] = euler_gamma_brent_mcmillan(precision)
        return _gamma_cache[precision]


def euler_gamma_brent_mcmillan(precision: int) -> mpfr:
    """gamma = A/B - ln N with A, B the Bessel-type sums of Brent and McMillan.

    The truncation error is below pi e^(-4N); N is picked so that this is
    under 2^-(precision+8).  The sums are run to k = ceil(beta N) with
    beta = 3.5911 (root of beta (ln beta - 1) = 3), which makes their own
    truncation error negligible at the same scale.
    """
    precision = check_precision(precision)
    n = math.ceil(((precision + 8) * math.log(2) + math.log(math.pi)) / 4) + 1
    kmax = math.ceil(3.5911 * n) + 1
    work = precision + _GUARD + 2 * kmax.bit_length()
    with working_precision(work):
        ln_n = gmpy2.log(mpfr(n))
        n2 = mpfr(n) ** 2
        u = -ln_n  # running (N^k/k!)^2 (H_k - ln N), k = 0
        v = mpfr(1)
        a_sum, b_sum = u, v
        for k in range(1, kmax + 1):
            v = v * n2 / (k * k)
            u = (u * n2 / k + v) / k
            a_sum += u
            b_sum += v
        val = a_sum / b_sum
    return mpfr(val, precision)


def euler_gamma_euler_maclaurin(precision: int, n: int | None = None) -> mpfr:
    """gamma from H_{N-1} - ln N + 1/(2N) - sum B_2k/(2k N^2k).

    An independent second route used to validate the Brent-McMillan value.
    """
    precision = check_precision(precision)
    if n is None:
        n = _shift_target(precision) * 2
    work = precision + _GUARD
    with working_precision(work):
        nn = mpfr(n)
        h = gmpy2.fsum([1 / mpfr(k) for k in range(1, n)])
        val = h - gmpy2.log(nn) + 1 / (2 * nn)
        # H_{N-1} = ln N + gamma - 1/(2N) - sum B_2k / (2k N^2k)
        val += _stirling_tail(nn, work, 0, lambda k: 2 * k)
    return mpfr(val, precision)
