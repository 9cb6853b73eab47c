"""Newton series f(x) = sum_k C(x-a, k) Delta^k f(a): construction and evaluation.

The certified stopping rule uses the remainder estimate for functions whose
q-th derivative is completely monotone:

    |R_n(x)| <= |(x-a)^(n) / (b-a)^(n)| * |f(b) - sum_{k<q} C(b-a, k) Delta^k f(a)|

for any b < min(a, x) in the domain, where ^(n) is the falling power.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from .core import (
    DEFAULT_PRECISION,
    DomainError,
    Interval,
    binomial_stream,
    falling_factorial,
    falling_ratio_stream,
    gen_binomial,
    log_abs_falling_ratio,
    nearest_integer,
    working_precision,
)
from .finitediff import (
    DiffTable,
    DuplicateNodeError,
    build_table,
    closed_form_table,
    divided_difference,
)
from .registry import FuncHandle, MissingDerivativeError

CROSS_CHECK_ORDER = 10
HEURISTIC_RUN = 4
DIVERGENCE_WINDOW = 32
DIVERGENCE_FACTOR = 10 ** 6


class Status(str, enum.Enum):
    CONVERGED_BOUNDED = "converged_bounded"
    CONVERGED_HEURISTIC = "converged_heuristic"
    FINITE_EXACT = "finite_exact"
    DIVERGED = "diverged"
    MAX_TERMS = "max_terms"


class ClosedFormMismatch(ArithmeticError):
    pass


class InvalidCertificate(ValueError):
    pass


@dataclass(frozen=True)
class NewtonExpansion:
    f: FuncHandle
    anchor: mpfr
    table: DiffTable
    domain: Interval
    precision: int

    @property
    def order(self) -> int:
        return self.table.max_order

    def coefficient(self, k: int) -> mpfr:
        return self.table[k]

    def term(self, k: int, x) -> mpfr:
        with working_precision(self.table.working_precision):
            return gen_binomial(mpfr(x) - self.anchor, k, self.table.working_precision) * self.table[k]

    def partial_sum(self, x, n: int) -> mpfr:
        """Sum of the first n terms (k = 0..n-1)."""
        if n > self.order + 1:
            raise ValueError(f"table only has {self.order + 1} coefficients")
        prec = self.table.working_precision
        with working_precision(prec):
            binoms = binomial_stream(mpfr(x) - self.anchor)
            terms = [next(binoms) * self.table[k] for k in range(n)]
            return gmpy2.fsum(terms)


def expand(f: FuncHandle, a, K: int, precision: int = DEFAULT_PRECISION) -> NewtonExpansion:
    """Build the coefficient table Delta^k f(a), k <= K.

    A registered closed form is preferred; its first coefficients are
    compared against a sampled table and any disagreement is an error.
    """
    if not f.domain.right_unbounded:
        raise DomainError(f"{f.name}: Newton expansion needs a right-unbounded domain")
    with working_precision(precision):
        a = mpfr(a)
    if not f.domain.contains(a):
        raise DomainError(f"{f.name}: anchor {a} outside domain {f.domain}")
    if f.closed_form is not None:
        table = closed_form_table(f, a, K, precision)
        check = build_table(f, a, min(K, CROSS_CHECK_ORDER), precision)
        with working_precision(table.working_precision):
            for k in range(len(check)):
                allowed = 16 * (check.error_bound[k] + table.error_bound[k]) + \
                    mpfr(2) ** (-precision) * abs(check[k])
                if abs(table[k] - check[k]) > allowed:
                    raise ClosedFormMismatch(
                        f"{f.name}: closed-form Delta^{k} f({a}) = {table[k]} but samples give {check[k]}")
    else:
        table = build_table(f, a, K, precision)
    return NewtonExpansion(f, a, table, f.domain, precision)


@dataclass(frozen=True)
class EvalReport:
    value: mpfr
    terms_used: int
    status: Status
    remainder_bound: Optional[mpfr] = None
    b_used: Optional[mpfr] = None
    flags: tuple = ()
    last_term: Optional[mpfr] = None


def default_b(domain: Interval, a, x) -> mpfr:
    """min(a, x) - min(0.5, (min(a, x) - inf I)/2)."""
    lo = min(a, x)
    if domain.lower is None:
        return lo - mpfr(0.5)
    return lo - min(mpfr(0.5), (lo - domain.lower) / 2)


def _is_zero_series(table: DiffTable, upto: int, target_precision: int) -> bool:
    """All coefficients indistinguishable from rounding noise of unit-size samples.

    Samples such as sin(pi k) are themselves pure noise, so the noise floor
    is taken relative to max(1, |f|) rather than to the samples.
    """
    u = mpfr(2) ** (-target_precision)
    floor = u * max([mpfr(1)] + [abs(table[0])])
    return all(abs(table[k]) <= 16 * table.error_bound[k] or abs(table[k]) <= floor * 2 ** k
               for k in range(upto))


def eval_series(exp: NewtonExpansion, x, tolerance=1e-12, max_terms: Optional[int] = None,
                b=None, q: Optional[int] = None) -> EvalReport:
    """Sum the Newton series at x.

    Stopping rules in priority order: exact finite sum when x - a is a
    nonnegative integer; the remainder bound (only when a certificate
    ``q`` is given, ``b`` defaulting per :func:`default_b`); four consecutive
    terms below tolerance/4 (only without a certificate); divergence when 32
    consecutive term magnitudes never decrease and the last exceeds
    10^6 * tolerance; otherwise ``max_terms``.
    """
    table = exp.table
    prec = table.working_precision
    if max_terms is None:
        max_terms = table.max_order + 1
    n_avail = min(max_terms, table.max_order + 1)
    with working_precision(prec):
        x = mpfr(x)
        a = exp.anchor
        tol = mpfr(tolerance)
        if not exp.domain.contains(x):
            raise DomainError(f"{exp.f.name}: x={x} outside domain {exp.domain}")
        flags = []

        bound_scale = None
        ratios = None
        if q is not None:
            if q < 0 or q > table.max_order:
                raise InvalidCertificate(f"q={q} outside table order {table.max_order}")
            if b is None:
                b = default_b(exp.domain, a, x)
            b = mpfr(b)
            if not b < min(a, x):
                raise InvalidCertificate(f"b={b} must be < min(a, x) = {min(a, x)}")
            if not exp.domain.contains(b):
                raise InvalidCertificate(f"b={b} outside domain {exp.domain}")
            fb = exp.f(b, prec)
            binoms_b = binomial_stream(b - a)
            head = gmpy2.fsum([next(binoms_b) * table[k] for k in range(q)])
            bound_scale = abs(fb - head)
            if _is_zero_series(table, n_avail, exp.precision) and bound_scale > 16 * tol:
                # a certified series cannot vanish identically while f(b) does not
                flags.append("certificate_inconsistent")
                bound_scale = None
            else:
                ratios = falling_ratio_stream(x, a, b)
                next(ratios)  # n = 0
        elif b is not None:
            raise InvalidCertificate("b given without a certificate order q")

        # anchors and x arrive as decimals rounded at different widths; match at the caller precision
        m = nearest_integer(x - a, exp.precision)
        finite = m is not None and m >= 0
        binoms = binomial_stream(x - a)
        terms = []
        mags = []
        small_run = 0
        status = Status.MAX_TERMS
        bound = None
        last_term = None
        for k in range(n_avail):
            t = next(binoms) * table[k]
            terms.append(t)
            last_term = t
            n = k + 1
            if finite and k == m:
                status = Status.FINITE_EXACT
                if q is not None:
                    bound = mpfr(0)
                break
            if ratios is not None:
                bound = abs(next(ratios)) * bound_scale
                if n >= max(q, 1) and bound < tol:
                    status = Status.CONVERGED_BOUNDED
                    break
            else:
                if abs(t) < tol / 4:
                    small_run += 1
                    if small_run >= HEURISTIC_RUN:
                        status = Status.CONVERGED_HEURISTIC
                        break
                else:
                    small_run = 0
            mags.append(abs(t))
            if len(mags) >= DIVERGENCE_WINDOW:
                window = mags[-DIVERGENCE_WINDOW:]
                if all(window[i + 1] >= window[i] for i in range(DIVERGENCE_WINDOW - 1)) \
                        and window[-1] > DIVERGENCE_FACTOR * tol:
                    status = Status.DIVERGED
                    break
        value = gmpy2.fsum(terms)
        if status is not Status.FINITE_EXACT and _is_zero_series(table, len(terms), exp.precision):
            flags.append("identically_zero_series")
        b_out = b if q is not None else None
        return EvalReport(value, len(terms), status, bound, b_out, tuple(flags), last_term)


class NodeCollisionError(DuplicateNodeError):
    pass


def remainder_identity_check(f: FuncHandle, a, x, n: int, precision: int = 256) -> mpfr:
    """|(f(x) - partial sum) - (x-a)^(n) f[a, ..., a+n-1, x]|, both sides computed separately.

    The left side uses the sampled difference table, the right side the
    divided-difference recursion on the n+1 nodes.
    """
    with working_precision(precision):
        a, x = mpfr(a), mpfr(x)
        m = nearest_integer(x - a, precision)
        if m is not None and 0 <= m < n:
            raise NodeCollisionError(f"x={x} coincides with node a+{m}")
    work = precision + n + 32
    with working_precision(work):
        fx = f(x, work)
        if n == 0:
            lhs = fx
        else:
            table = build_table(f, a, n - 1, precision)
            binoms = binomial_stream(x - a)
            lhs = fx - gmpy2.fsum([next(binoms) * table[k] for k in range(n)])
        nodes = [a + j for j in range(n)] + [x]
        dd = divided_difference(f, nodes, work).value
        rhs = falling_factorial(x - a, n, work) * dd
        return abs(lhs - rhs)


@dataclass(frozen=True)
class TaylorResult:
    partial_sum: mpfr
    bound: mpfr
    b: mpfr


class NoValidB(DomainError):
    pass


def taylor_eval(f: FuncHandle, a, x, n: int, monotone: str = "cm", q: int = 0, b=None,
                precision: int = DEFAULT_PRECISION) -> TaylorResult:
    """Taylor partial sum of order n at a, with the geometric remainder bound.

    ``monotone="am"`` asserts f^(q) is absolutely monotone; ``"cm"`` asserts it
    is completely monotone, in which case the bound is derived for
    y -> f(-y), which is absolutely monotone on the reflected domain.  ``b``
    is reported in the original coordinates.
    """
    if monotone not in ("am", "cm"):
        raise ValueError("monotone must be 'am' or 'cm'")
    if f.derivative is None:
        raise MissingDerivativeError(f"{f.name} has no derivative evaluator")
    work = precision + 32
    with working_precision(work):
        a, x = mpfr(a), mpfr(x)
        sgn = -1 if monotone == "cm" else 1
        A, X = sgn * a, sgn * x
        dom = f.domain.reflected() if sgn < 0 else f.domain
        d = abs(X - A)
        if b is not None:
            B = sgn * mpfr(b)
        else:
            B = _choose_taylor_b(dom, A, d)
        if not (dom.contains(B) and B - A > d and (B > X or d == 0)):
            raise NoValidB(f"no admissible b: need b in domain with |x-a| < |b-a| on the {monotone} side")
        derivs = [f.derivative_at(k, a, work) for k in range(max(n, q))]
        fact = 1
        terms = []
        for k in range(n):
            if k:
                fact *= k
            terms.append(derivs[k] * (x - a) ** k / fact)
        partial = gmpy2.fsum(terms)
        if d == 0:
            bound = mpfr(0)
        else:
            head = []
            fact = 1
            for k in range(q):
                if k:
                    fact *= k
                head.append((sgn ** k) * derivs[k] * (B - A) ** k / fact)
            scale = abs(f(sgn * B, work) - gmpy2.fsum(head))
            bound = (d / (B - A)) ** n * scale
    return TaylorResult(mpfr(partial, precision), mpfr(bound, precision), mpfr(sgn * B, precision))


def _choose_taylor_b(dom: Interval, A: mpfr, d: mpfr) -> mpfr:
    if d == 0:
        step = mpfr(1)
    else:
        step = 2 * d
    if dom.upper is None:
        return A + step
    room = dom.upper - A
    if room <= d:
        raise NoValidB("domain too short on the required side for a Taylor bound")
    return A + min(step, (d + room) / 2)


def ratio_table(x, a, b, n_list: Sequence[int], precision: int = DEFAULT_PRECISION) -> list:
    """(n, log|ratio|, sign) rows of the falling-factorial ratio."""
    return [(n, *log_abs_falling_ratio(x, a, b, n, precision)) for n in n_list]


def fit_decay_slope(rows) -> float:
    """Least-squares slope of log|ratio| against log n; -inf rows make it undefined."""
    pts = [(math.log(n), float(lr)) for n, lr, s in rows if s != 0]
    if len(pts) < 2 or len(pts) != len(rows):
        return float("nan")
    slope, _ = statistics.linear_regression([p[0] for p in pts], [p[1] for p in pts])
    return slope


def log_spaced(lo: int, hi: int, count: int) -> list:
    if count < 2:
        return [hi]
    out = sorted({round(lo * (hi / lo) ** (i / (count - 1))) for i in range(count)})
    return out
