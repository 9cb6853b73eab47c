"""Principal indefinite sums Sigma g as the limit of

    f_n^p[g](x) = sum_{k=1}^{n-1} g(k) - sum_{k=0}^{n-1} g(x+k) + sum_{j=1}^{p} C(x, j) Delta^{j-1} g(n)

as n -> infinity, for g whose p-th difference along the integers tends to 0.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from .core import DEFAULT_PRECISION, DomainError, Interval, gen_binomial, working_precision
from .finitediff import Membership, binomial_sum_difference, dp_membership, table_from_values
from .newton import EvalReport, NewtonExpansion, eval_series
from .registry import FuncHandle, lookup

MAX_AUTO_P = 8
# orders added on top of the smallest admissible p when p is chosen automatically
AUTO_P_BOOST = 2
FIRST_N = 2 ** 6
GUARD_BITS = 32


class SigmaStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_N = "max_n"
    P_REJECTED = "p_rejected"


class PRejected(DomainError):
    pass


class _IntegerSums:
    """Memo of S(m) = g(1) + ... + g(m) per (function, precision).

    Stored at the breakpoints requested so far; a new request extends from
    the nearest stored point below it.  Writers hold the lock; readers only
    ever see fully inserted entries.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._store: dict = {}

    def prefix(self, g: FuncHandle, m: int, precision: int) -> mpfr:
        key = (g, precision)
        points = self._store.get(key)
        if points is not None and m in points:
            return points[m]
        with self._lock:
            points = self._store.setdefault(key, {0: mpfr(0, precision)})
            if m in points:
                return points[m]
            base = max(k for k in points if k <= m)
            with working_precision(precision):
                chunk = gmpy2.fsum([g(mpfr(k), precision) for k in range(base + 1, m + 1)])
                total = points[base] + chunk
            points[m] = total
            return total

    def clear(self):
        with self._lock:
            self._store.clear()


INTEGER_SUMS = _IntegerSums()


def _work_precision(precision: int, n: int, p: int) -> int:
    return precision + GUARD_BITS + n.bit_length() + p


def _check_x(g: FuncHandle, x) -> None:
    if not x > 0:
        raise DomainError(f"Sigma is defined for x > 0, got {x}")
    if not g.domain.contains(x):
        raise DomainError(f"{g.name}: x={x} outside domain {g.domain}")


def correction_block(g: FuncHandle, p: int, n: int, x, precision: int) -> mpfr:
    """sum_{j=1}^{p} C(x, j) Delta^{j-1} g(n)."""
    terms = []
    for j in range(1, p + 1):
        diff = binomial_sum_difference(g, n, j - 1, precision)
        terms.append(gen_binomial(x, j, precision) * diff)
    with working_precision(precision):
        return gmpy2.fsum(terms) if terms else mpfr(0)


def f_np(g: FuncHandle, p: int, n: int, x, precision: int = DEFAULT_PRECISION) -> mpfr:
    if n < 2:
        raise ValueError("n must be at least 2")
    if p < 0:
        raise ValueError("p must be nonnegative")
    work = _work_precision(precision, n, p)
    with working_precision(work):
        x = mpfr(x)
        _check_x(g, x)
        s1 = INTEGER_SUMS.prefix(g, n - 1, work)
        s2 = gmpy2.fsum([g(x + k, work) for k in range(n)])
        s3 = correction_block(g, p, n, x, work)
        return s1 - s2 + s3


@dataclass(frozen=True)
class SigmaRequest:
    g: FuncHandle
    x: mpfr
    tolerance: float = 1e-8
    p: Optional[int] = None
    n_max: int = 2 ** 20
    precision: int = DEFAULT_PRECISION
    extrapolate: bool = False


@dataclass(frozen=True)
class SigmaResult:
    value: mpfr
    p_used: Optional[int]
    n_final: int
    successive_delta: mpfr
    status: SigmaStatus
    p_min: Optional[int] = None
    normalization_residual: Optional[mpfr] = None
    empirical_rate: Optional[float] = None
    extrapolated: Optional[mpfr] = None
    history: tuple = field(default=(), repr=False)


def select_p(g: FuncHandle, n_max: int = 2 ** 20, threshold=1e-4,
             precision: int = DEFAULT_PRECISION) -> Optional[int]:
    """Smallest p <= 8 with D^p membership evidence, or None."""
    for p in range(0, MAX_AUTO_P + 1):
        try:
            verdict = dp_membership(g, p, n_max, threshold, precision).verdict
        except DomainError:
            return None
        if verdict is Membership.MEMBER:
            return p
    return None


class _Sequence:
    """f_n^p[g](x) along n = 64, 128, ... with the x-block grown incrementally."""

    def __init__(self, g: FuncHandle, p: int, x: mpfr, precision: int, n_max: int):
        self.g, self.p, self.x, self.precision = g, p, x, precision
        self.work = _work_precision(precision, max(n_max, FIRST_N) * 2, p)
        self.n = 0
        with working_precision(self.work):
            self.s2 = mpfr(0)

    def value_at(self, n: int) -> mpfr:
        g, work = self.g, self.work
        with working_precision(work):
            x = self.x
            self.s2 += gmpy2.fsum([g(x + k, work) for k in range(self.n, n)])
            self.n = n
            s1 = INTEGER_SUMS.prefix(g, n - 1, work)
            s3 = correction_block(g, self.p, n, x, work)
            return s1 - self.s2 + s3


def sigma_eval(req: SigmaRequest) -> SigmaResult:
    g, prec = req.g, req.precision
    with working_precision(prec + GUARD_BITS):
        x = mpfr(req.x)
        tol = mpfr(req.tolerance)
    _check_x(g, x)
    p_min = None
    p = req.p
    if p is None:
        p_min = select_p(g, precision=prec)
        if p_min is None:
            return SigmaResult(mpfr("nan"), None, 0, mpfr("inf"), SigmaStatus.P_REJECTED)
        p = min(p_min + AUTO_P_BOOST, MAX_AUTO_P)

    seq = _Sequence(g, p, x, prec, req.n_max)
    history = []
    n = FIRST_N
    prev = seq.value_at(n)
    history.append((n, prev))
    status = SigmaStatus.MAX_N
    delta = mpfr("inf")
    while 2 * n <= req.n_max:
        n *= 2
        cur = seq.value_at(n)
        history.append((n, cur))
        with working_precision(seq.work):
            delta = abs(cur - prev)
        prev = cur
        if delta < tol / 2:
            status = SigmaStatus.CONVERGED
            break

    rate = empirical_rate(history)
    extrapolated = None
    if req.extrapolate and rate is not None and len(history) >= 2:
        with working_precision(seq.work):
            (_, f1), (_, f2) = history[-2], history[-1]
            w = mpfr(2) ** rate
            extrapolated = mpfr((w * f2 - f1) / (w - 1), prec)

    norm = normalization_residual(g, p, n, prec)
    return SigmaResult(mpfr(prev, prec), p, n, mpfr(delta, prec), status, p_min, norm, rate,
                       extrapolated, tuple((k, mpfr(v, prec)) for k, v in history))


def empirical_rate(history: Sequence) -> Optional[float]:
    """Exponent r in |f_2n - f_n| ~ C n^-r from the last three iterates."""
    if len(history) < 3:
        return None
    (_, a), (_, b), (_, c) = history[-3:]
    d1, d2 = abs(b - a), abs(c - b)
    if d1 == 0 or d2 == 0:
        return None
    return math.log2(float(d1 / d2))


def normalization_residual(g: FuncHandle, p: int, n: int, precision: int) -> mpfr:
    """|f_n^p[g](1)|; Sigma g(1) = 0, and the sum telescopes to -g(n) when p = 0."""
    return abs(f_np(g, p, n, 1, precision))


def wellposedness_check(g: FuncHandle, p: int, q: int, x, n_list: Sequence[int],
                        precision: int = DEFAULT_PRECISION) -> list:
    """|f_n^q[g](x) - f_n^p[g](x)| for each n, each side computed on its own."""
    if q < p:
        raise ValueError("need q >= p")
    out = []
    for n in n_list:
        hi = f_np(g, q, n, x, precision)
        lo = f_np(g, p, n, x, precision)
        with working_precision(max(hi.precision, lo.precision)):
            out.append(abs(hi - lo))
    return out


@dataclass(frozen=True)
class DifferenceEquationReport:
    residual: mpfr
    at_x: SigmaResult
    at_x_plus_1: SigmaResult
    g_x: mpfr


def difference_equation_check(g: FuncHandle, x, tol=1e-8, p: Optional[int] = None,
                              n_max: int = 2 ** 20, precision: int = DEFAULT_PRECISION) -> DifferenceEquationReport:
    """|Sigma g(x+1) - Sigma g(x) - g(x)| with both sums at the same p."""
    if p is None:
        p_min = select_p(g, precision=precision)
        if p_min is None:
            raise PRejected(f"{g.name}: no p <= {MAX_AUTO_P} with D^p evidence")
        p = min(p_min + AUTO_P_BOOST, MAX_AUTO_P)
    with working_precision(precision):
        x = mpfr(x)
        left = sigma_eval(SigmaRequest(g, x, tol, p, n_max, precision))
        right = sigma_eval(SigmaRequest(g, x + 1, tol, p, n_max, precision))
        gx = g(x, precision)
        return DifferenceEquationReport(abs(right.value - left.value - gx), left, right, gx)


def sigma_handle(g: FuncHandle, tol=1e-12, p: Optional[int] = None, n_max: int = 2 ** 20) -> FuncHandle:
    """Sigma g as an evaluable handle on the positive reals (one limit per point)."""

    def evaluator(x, prec):
        res = sigma_eval(SigmaRequest(g, x, tol, p, n_max, prec))
        if res.status is SigmaStatus.P_REJECTED:
            raise PRejected(f"{g.name}: no admissible p")
        return res.value

    return FuncHandle(f"sigma({g.name})", Interval.positive_reals(), evaluator)


def stern_series(x, tolerance=1e-8, max_terms: int = 10 ** 4,
                 precision: int = DEFAULT_PRECISION) -> EvalReport:
    """Newton series of Sigma(1/t) at anchor 1: sum_k C(x-1, k) (-1)^(k-1) / k.

    Its coefficients are Delta^k Sigma g(1) = Delta^(k-1) g(1) for k >= 1 and
    Sigma g(1) = 0, with g = 1/t supplying its differences in closed form.
    """
    recip = lookup("recip")
    with working_precision(precision):
        x = mpfr(x)
        if not x > 0:
            raise DomainError(f"Stern's series needs x > 0, got {x}")
    with working_precision(precision):
        coeffs = [mpfr(0)] + list(recip.closed_form(mpfr(1), max_terms - 1, precision))
    table = table_from_values(1, coeffs[:max_terms], precision, "closed-form")
    exp = NewtonExpansion(sigma_handle(recip), mpfr(1, precision), table, Interval.positive_reals(), precision)
    return eval_series(exp, x, tolerance, max_terms)
