"""Forward-difference tables, divided differences and D^p tail detection."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .core import DEFAULT_PRECISION, DomainError, working_precision
from .registry import FuncHandle

GUARD_BITS = 32


@dataclass(frozen=True)
class DiffTable:
    """Delta^k f(a) for k = 0..K with a-priori absolute error estimates."""

    anchor: mpfr
    max_order: int
    values: tuple
    working_precision: int
    error_bound: tuple
    source: str = "numeric"

    def __getitem__(self, k: int) -> mpfr:
        return self.values[k]

    def __len__(self) -> int:
        return len(self.values)


def _check_domain(f: FuncHandle, points) -> None:
    for x in points:
        if not f.domain.contains(x):
            raise DomainError(f"{f.name}: point {x} outside domain {f.domain}")


def table_precision(target_precision: int, order: int) -> int:
    return target_precision + order + GUARD_BITS


def build_table(f: FuncHandle, a, K: int, target_precision: int = DEFAULT_PRECISION) -> DiffTable:
    """Difference table from samples f(a), ..., f(a+K).

    Samples are taken at ``target_precision + K + 32`` bits: the alternating
    weights of Delta^k sum to 2^k in absolute value, so up to K bits vanish
    to cancellation.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    prec = table_precision(target_precision, K)
    with working_precision(prec):
        a = mpfr(a)
        nodes = [a + j for j in range(K + 1)]
        _check_domain(f, nodes)
        row = [f(x, prec) for x in nodes]
        u = mpfr(2) ** (-prec)
        # running max over |f(a)|, ..., |f(a+k)|
        scale = []
        m = mpfr(0)
        for v in row:
            m = max(m, abs(v))
            scale.append(m)
    # differencing runs 64 bits wider so the subtractions add (almost) nothing
    # to the sample rounding, which Delta^k amplifies by at most 2^k
    with working_precision(prec + 64):
        values = [row[0]]
        for _ in range(K):
            row = [row[i + 1] - row[i] for i in range(len(row) - 1)]
            values.append(row[0])
    with working_precision(prec):
        values = [+v for v in values]
        errors = [(mpfr(2) ** k) * u * scale[k] for k in range(K + 1)]
    return DiffTable(a, K, tuple(values), prec, tuple(errors))


def table_from_values(a, values: Sequence, precision: int, source: str) -> DiffTable:
    """Wrap externally computed differences (e.g. a closed form) as a table."""
    u = mpfr(2) ** (-precision)
    with working_precision(precision):
        values = tuple(mpfr(v) for v in values)
        errors = tuple(abs(v) * u * 4 for v in values)
    return DiffTable(mpfr(a), len(values) - 1, values, precision, errors, source)


def closed_form_table(f: FuncHandle, a, K: int, target_precision: int = DEFAULT_PRECISION) -> DiffTable:
    if f.closed_form is None:
        raise LookupError(f"{f.name} has no closed-form differences")
    prec = target_precision + GUARD_BITS
    with working_precision(prec):
        a = mpfr(a)
        _check_domain(f, [a])
        values = f.closed_form(a, K, prec)
    return table_from_values(a, values, prec, "closed-form")


def binomial_sum_difference(f: FuncHandle, a, k: int, precision: int) -> mpfr:
    """Delta^k f(a) as sum_j (-1)^(k-j) C(k,j) f(a+j), summed exactly then rounded."""
    prec = table_precision(precision, k)
    with working_precision(prec):
        a = mpfr(a)
        terms = []
        c = 1
        for j in range(k + 1):
            terms.append((-1) ** (k - j) * c * f(a + j, prec))
            c = c * (k - j) // (j + 1)
        return gmpy2.fsum(terms)


@dataclass(frozen=True)
class DividedDiff:
    nodes: tuple
    value: mpfr


class DuplicateNodeError(DomainError):
    pass


def divided_difference(f: FuncHandle, nodes: Sequence, precision: int = DEFAULT_PRECISION) -> DividedDiff:
    """f[x_0, ..., x_n] by the classical recursion on the sorted nodes.

    Nodes closer than 2^(-precision/2) are rejected: coincident nodes
    would need derivatives, which this routine does not use.
    """
    if not nodes:
        raise ValueError("need at least one node")
    with working_precision(precision):
        xs = sorted(mpfr(x) for x in nodes)
        min_gap = mpfr(2) ** (-precision // 2)
        for lo, hi in zip(xs, xs[1:]):
            if hi - lo <= min_gap:
                raise DuplicateNodeError(f"nodes {lo} and {hi} coincide at working precision")
        _check_domain(f, xs)
        col = [f(x, precision) for x in xs]
        n = len(xs)
        for level in range(1, n):
            col = [(col[i + 1] - col[i]) / (xs[i + level] - xs[i]) for i in range(n - level)]
        return DividedDiff(tuple(xs), col[0])


class Membership(str, enum.Enum):
    MEMBER = "member"
    NON_MEMBER = "non_member"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MembershipReport:
    verdict: Membership
    p: int
    samples: tuple  # (n, Delta^p g(n)) pairs
    threshold: float
    heuristic: bool = True


def dp_samples(g: FuncHandle, p: int, n_max: int, precision: int = DEFAULT_PRECISION) -> list:
    schedule = []
    n = 8
    while n <= n_max:
        schedule.append(n)
        n *= 2
    return [(n, binomial_sum_difference(g, n, p, precision)) for n in schedule]


def dp_membership(g: FuncHandle, p: int, n_max: int = 2 ** 20, threshold=1e-4,
                  precision: int = DEFAULT_PRECISION) -> MembershipReport:
    """Evidence for Delta^p g(n) -> 0 along n = 8, 16, ..., n_max.

    ``member`` when the magnitudes are non-increasing over the last three
    samples and the final one is below ``threshold``; ``non_member`` when the
    last three all exceed 10*threshold without decreasing; otherwise
    ``inconclusive``.  This is a heuristic, not a limit proof.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    if n_max < 64:
        raise ValueError("n_max must be at least 64")
    samples = dp_samples(g, p, n_max, precision)
    mags = [abs(v) for _, v in samples]
    tail = mags[-3:]
    thr = mpfr(threshold)
    # allow a few ulps of slack so exact zeros and flat noise read as non-increasing
    slack = mpfr(2) ** (-precision + 8) * max(max(mags), mpfr(1))
    decreasing = all(tail[i + 1] <= tail[i] + slack for i in range(len(tail) - 1))
    if decreasing and tail[-1] < thr:
        verdict = Membership.MEMBER
    elif all(m > 10 * thr for m in tail) and all(tail[i + 1] >= tail[i] for i in range(len(tail) - 1)):
        verdict = Membership.NON_MEMBER
    else:
        verdict = Membership.INCONCLUSIVE
    return MembershipReport(verdict, p, tuple(samples), float(threshold))
