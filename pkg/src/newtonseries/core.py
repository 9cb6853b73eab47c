"""Configurable-precision scalars and the falling-factorial primitives.

Every real number in the package is a :class:`gmpy2.mpfr`. Precision is
carried by each value and computations run inside :func:`working_precision`,
which installs a thread-local gmpy2 context, so nothing here touches global
state.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Union

import gmpy2
from gmpy2 import mpfr

Real = mpfr
RealLike = Union[mpfr, int, float, str, Fraction]

DEFAULT_PRECISION = 128
MIN_PRECISION = 53

# factors multiplied together before one log is taken in log_abs_falling_ratio
_LOG_BLOCK = 64


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


def check_precision(bits: int) -> int:
    bits = int(bits)
    if bits < MIN_PRECISION:
        raise ValueError(f"precision must be >= {MIN_PRECISION} bits, got {bits}")
    return bits


@contextmanager
def working_precision(bits: int) -> Iterator[None]:
    """Run the enclosed arithmetic at ``bits`` of significand (thread-local)."""
    with gmpy2.context(gmpy2.get_context(), precision=check_precision(bits)):
        yield


def precision_of(x) -> int:
    if isinstance(x, mpfr):
        return x.precision
    return MIN_PRECISION


@contextmanager
def promoted(*operands) -> Iterator[int]:
    """Context in which arithmetic happens at the widest operand precision.

    >>> a, b = real(1, 64), real(3, 200)
    >>> with promoted(a, b):
    ...     (a / b).precision
    200
    """
    bits = max([precision_of(v) for v in operands] + [MIN_PRECISION])
    with working_precision(bits):
        yield bits


def real(value: RealLike, precision: int = DEFAULT_PRECISION) -> mpfr:
    """Convert ``value`` to an mpfr rounded to ``precision`` bits.

    Strings are parsed as decimals directly at the target precision, so
    ``real("0.1", 256)`` is the 256-bit nearest value to one tenth rather
    than a widened double.
    """
    precision = check_precision(precision)
    if isinstance(value, Fraction):
        with working_precision(precision):
            return mpfr(value.numerator) / mpfr(value.denominator)
    if isinstance(value, str):
        value = value.strip()
    return mpfr(value, precision)


def decimal_digits(precision: int) -> int:
    """Significant digits used when printing a value of the given precision."""
    return max(1, math.floor(check_precision(precision) * 0.301) - 2)


def to_decimal(x: mpfr, precision: Optional[int] = None) -> str:
    if precision is None:
        precision = precision_of(x)
    digits = decimal_digits(precision)
    if gmpy2.is_zero(x):
        return "0"
    if not gmpy2.is_finite(x):
        return str(float(x))
    mant, exp10, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    e = exp10 - 1  # value = d.ddd * 10^e
    if -5 <= e < digits:
        # positional form keeps small tables readable
        return sign + _positional(mant, e)
    body = mant[0] + ("." + mant[1:] if len(mant) > 1 else "")
    return f"{sign}{body}e{e:+d}"


def _positional(digits: str, e: int) -> str:
    point = 1 + e
    if point <= 0:
        body = "0." + "0" * (-point) + digits
    elif point >= len(digits):
        body = digits + "0" * (point - len(digits))
    else:
        body = digits[:point] + "." + digits[point:]
    return body


def from_decimal(text: str, precision: int = DEFAULT_PRECISION) -> mpfr:
    try:
        return real(text, precision)
    except ValueError as exc:
        raise ValueError(f"not a decimal number: {text!r}") from exc


def integer_tolerance(precision: int) -> mpfr:
    return mpfr(2) ** (16 - check_precision(precision))


def nearest_integer(x: mpfr, precision: Optional[int] = None) -> Optional[int]:
    """Return the integer ``x`` rounds to when within 2^(16-precision), else None.

    The tolerance is absolute for |x| <= 1 and relative above that, so that
    anchors typed in decimal (``2.3 - 0.3``) are still seen as integers.
    """
    if precision is None:
        precision = precision_of(x)
    if not gmpy2.is_finite(x):
        return None
    with working_precision(max(precision, precision_of(x))):
        m = gmpy2.rint(x)
        scale = max(mpfr(1), abs(m))
        if abs(x - m) <= integer_tolerance(precision) * scale:
            return int(m)
    return None


@dataclass(frozen=True)
class Interval:
    """Real interval with an optional finite lower end.

    ``lower is None`` means minus infinity.  Windows used for sampling set
    ``right_unbounded=False`` and give ``upper``.
    """

    lower: Optional[mpfr] = None
    lower_open: bool = True
    right_unbounded: bool = True
    upper: Optional[mpfr] = None
    upper_open: bool = False

    def __post_init__(self):
        if not self.right_unbounded and self.upper is None:
            raise ValueError("bounded interval needs an upper end")
        if self.right_unbounded and self.upper is not None:
            raise ValueError("right-unbounded interval cannot have an upper end")
        if self.lower is not None and self.upper is not None and self.upper < self.lower:
            raise ValueError("empty interval")

    @classmethod
    def positive_reals(cls) -> "Interval":
        return cls(lower=mpfr(0), lower_open=True)

    @classmethod
    def real_line(cls) -> "Interval":
        return cls()

    @classmethod
    def closed(cls, lower, upper) -> "Interval":
        return cls(lower=mpfr(lower), lower_open=False, right_unbounded=False, upper=mpfr(upper))

    def contains(self, x) -> bool:
        if self.lower is not None:
            if x < self.lower or (self.lower_open and x == self.lower):
                return False
        if self.upper is not None:
            if x > self.upper or (self.upper_open and x == self.upper):
                return False
        return True

    def is_subset_of(self, other: "Interval") -> bool:
        if other.lower is not None:
            if self.lower is None or self.lower < other.lower:
                return False
            if self.lower == other.lower and other.lower_open and not self.lower_open:
                return False
        if other.upper is not None:
            if self.upper is None or self.upper > other.upper:
                return False
        return True

    def reflected(self) -> "Interval":
        """The interval {-x : x in self}."""
        if self.right_unbounded:
            if self.lower is None:
                return Interval()
            return Interval(lower=None, right_unbounded=False, upper=-self.lower,
                            upper_open=self.lower_open)
        if self.lower is None:
            return Interval(lower=-self.upper, lower_open=self.upper_open)
        return Interval(lower=-self.upper, lower_open=self.upper_open, right_unbounded=False,
                        upper=-self.lower, upper_open=self.lower_open)

    def __str__(self) -> str:
        lo = "(-inf" if self.lower is None else ("(" if self.lower_open else "[") + str(float(self.lower))
        hi = "inf)" if self.right_unbounded else str(float(self.upper)) + (")" if self.upper_open else "]")
        return f"{lo}, {hi}"


def falling_factorial(x: RealLike, k: int, precision: Optional[int] = None) -> mpfr:
    """x(x-1)...(x-k+1), with the empty product equal to 1."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if precision is None:
        precision = max(DEFAULT_PRECISION, precision_of(x))
    with working_precision(precision):
        x = mpfr(x)
        acc = mpfr(1)
        for i in range(k):
            acc *= x - i
        return acc


def gen_binomial(x: RealLike, k: int, precision: Optional[int] = None) -> mpfr:
    """Binomial coefficient C(x, k) for real upper argument."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if precision is None:
        precision = max(DEFAULT_PRECISION, precision_of(x))
    with working_precision(precision):
        x = mpfr(x)
        m = nearest_integer(x, precision)
        if m is not None and 0 <= m < k:
            return mpfr(0)
        acc = mpfr(1)
        for i in range(k):
            acc = acc * (x - i) / (i + 1)
        return acc


def binomial_stream(x: mpfr) -> Iterator[mpfr]:
    """Yield C(x, 0), C(x, 1), ... at the current working precision."""
    m = nearest_integer(x)
    c = mpfr(1)
    k = 0
    while True:
        yield c
        if m is not None and m == k:
            c = mpfr(0)
        else:
            c = c * (x - k) / (k + 1)
        k += 1


def _check_ratio_args(a, b):
    if not a > b:
        raise DomainError(f"falling-factorial ratio needs a > b (got a={a}, b={b})")


def log_abs_falling_ratio(x: RealLike, a: RealLike, b: RealLike, n: int,
                          precision: int = DEFAULT_PRECISION) -> tuple[mpfr, int]:
    """log |(x-a)^(n) / (b-a)^(n)| for falling powers, and the sign of the ratio.

    The denominator never vanishes because b - a < 0.  The sign is 0 exactly
    when x - a is one of 0, 1, ..., n-1, in which case the log magnitude is
    returned as -inf.  Factors are multiplied in short blocks whose logs are
    summed, so large n cannot overflow.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    with working_precision(precision):
        x, a, b = mpfr(x), mpfr(a), mpfr(b)
        _check_ratio_args(a, b)
        u, v = x - a, b - a
        m = nearest_integer(u, precision)
        if m is not None and 0 <= m < n:
            return mpfr("-inf"), 0
        total = mpfr(0)
        sign = 1
        block = mpfr(1)
        for i in range(n):
            block *= (u - i) / (v - i)
            if (i + 1) % _LOG_BLOCK == 0:
                if block < 0:
                    sign, block = -sign, -block
                total += gmpy2.log(block)
                block = mpfr(1)
        if block < 0:
            sign, block = -sign, -block
        total += gmpy2.log(block)
        return total, sign


def falling_ratio_stream(x: mpfr, a: mpfr, b: mpfr) -> Iterator[mpfr]:
    """Yield (x-a)^(n)/(b-a)^(n) for n = 0, 1, 2, ... at the working precision.

    mpfr exponents span about +-2^30 binary orders, so the running product
    cannot leave range for any term count reachable in practice.
    """
    _check_ratio_args(a, b)
    u, v = x - a, b - a
    m = nearest_integer(u)
    r = mpfr(1)
    n = 0
    while True:
        yield r
        if m is not None and m == n:
            r = mpfr(0)
        else:
            r = r * (u - n) / (v - n)
        n += 1
