"""Sampled higher-order convexity classes and the monotonicity labels built on them.

A function is p-convex when every divided difference on p+2 increasing nodes
is >= 0 and p-concave when every one is <= 0.  Complete, absolute and regular
monotonicity of f^(s) are read off the signs from order s-1 upwards:

    AM^s_{+-}:  sign at order m is +-1                for all m >= s-1
    CM^s_{+-}:  sign at order m is +-(-1)^(m+1-s)     for all m >= s-1
    RM^s:       every order m >= s-1 has a definite sign

Verdicts only cover the sampled window and the tested orders.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Optional

from gmpy2 import mpfr

from .core import DEFAULT_PRECISION, DomainError, Interval, working_precision
from .finitediff import dp_membership, divided_difference
from .registry import FuncHandle, forward_difference

DEFAULT_SEED = 20250101
MIN_LABEL_ORDERS = 2


class Sign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    ZERO = "zero"
    MIXED = "mixed"

    def admits(self, s: int) -> bool:
        """True if this verdict is compatible with the class K_s (s = +1/-1)."""
        if self is Sign.ZERO:
            return True
        if self is Sign.PLUS:
            return s > 0
        if self is Sign.MINUS:
            return s < 0
        return False


class InsufficientSamples(ValueError):
    pass


def _check_window(f: FuncHandle, window: Interval) -> tuple[float, float]:
    if window.right_unbounded or window.lower is None:
        raise DomainError("sampling window must be bounded")
    if not window.is_subset_of(f.domain):
        lo_ok = f.domain.contains(window.lower)
        hi_ok = f.domain.contains(window.upper)
        if not (lo_ok and hi_ok):
            raise DomainError(f"window {window} not inside domain {f.domain} of {f.name}")
    return float(window.lower), float(window.upper)


def _grid(lo: float, hi: float, count: int) -> list:
    if count == 1:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _random_tuples(rng: random.Random, lo: float, hi: float, size: int, count: int) -> list:
    out = []
    while len(out) < count:
        pts = sorted(rng.uniform(lo, hi) for _ in range(size))
        if all(b > a for a, b in zip(pts, pts[1:])):
            out.append(pts)
    return out


def guard_bits(nodes, order: int) -> int:
    """Extra bits so a divided difference on these nodes keeps full accuracy.

    Each recursion level divides by a node gap, so roughly
    order * log2(span / min_gap) bits are lost.
    """
    if len(nodes) < 2:
        return 32
    span = nodes[-1] - nodes[0]
    gap = min(b - a for a, b in zip(nodes, nodes[1:]))
    return 32 + max(0, order) * max(1, math.ceil(math.log2(span / gap)) + 1)


def divided_differences_for_order(f: FuncHandle, p: int, window: Interval, samples: int,
                                  seed: int = DEFAULT_SEED,
                                  precision: int = DEFAULT_PRECISION) -> list:
    lo, hi = _check_window(f, window)
    size = p + 2
    if samples < size:
        raise InsufficientSamples(f"order {p} needs at least {size} samples, got {samples}")
    grid = _grid(lo, hi, samples)
    tuples = [grid[i:i + size] for i in range(samples - size + 1)]
    rng = random.Random(f"{seed}:{p}")
    tuples += _random_tuples(rng, lo, hi, size, samples)
    values = []
    for nodes in tuples:
        work = precision + guard_bits(nodes, p + 1)
        dd = divided_difference(f, nodes, work).value
        values.append(mpfr(dd, precision))
    return values


def verdict(values, tolerance) -> Sign:
    tol = mpfr(tolerance)
    if all(abs(v) <= tol for v in values):
        return Sign.ZERO
    if all(v >= -tol for v in values):
        return Sign.PLUS
    if all(v <= tol for v in values):
        return Sign.MINUS
    return Sign.MIXED


def default_tolerance(f: FuncHandle, window: Interval, samples: int, precision: int) -> mpfr:
    lo, hi = _check_window(f, window)
    with working_precision(precision):
        scale = max(abs(f(x, precision)) for x in _grid(lo, hi, samples))
        return mpfr(2) ** (-precision // 2) * max(scale, mpfr(2) ** (-precision))


def test_order(f: FuncHandle, p: int, window: Interval, samples: int = 200, tolerance=None,
               seed: int = DEFAULT_SEED, precision: int = DEFAULT_PRECISION) -> Sign:
    """Sign class of f at convexity order p on the window.

    Divided differences are taken on every run of p+2 consecutive points of
    an equally spaced grid and on ``samples`` random increasing tuples.
    """
    if p < -1:
        raise ValueError("order must be >= -1")
    if tolerance is None:
        tolerance = default_tolerance(f, window, samples, precision)
    values = divided_differences_for_order(f, p, window, samples, seed, precision)
    return verdict(values, tolerance)


# not a pytest test despite the name
test_order.__test__ = False


@dataclass(frozen=True)
class Label:
    kind: str  # "AM", "CM" or "RM"
    sign: int  # +1, -1, or 0 for RM
    from_order: int  # s: the statement is about f^(s)

    def __str__(self) -> str:
        if self.kind == "RM":
            return f"RM^{self.from_order}"
        return f"{self.kind}^{self.from_order}_{{{self.sign:+d}}}"


def _pattern_holds(signs: dict, kind: str, sign: int, s: int, top: int) -> bool:
    for m in range(s - 1, top + 1):
        v = signs[m]
        if kind == "AM":
            ok = v.admits(sign)
        elif kind == "CM":
            ok = v.admits(sign * (-1) ** (m + 1 - s))
        else:
            ok = v is not Sign.MIXED
        if not ok:
            return False
    return True


def derive_labels(signs: dict, min_orders: int = MIN_LABEL_ORDERS) -> list:
    """Smallest-s AM/CM/RM labels consistent with the per-order verdicts."""
    top = max(signs)
    labels = []
    for kind, sign in (("CM", 1), ("CM", -1), ("AM", 1), ("AM", -1), ("RM", 0)):
        for s in range(0, top + 2):
            if top - (s - 1) + 1 < min_orders:
                break
            if _pattern_holds(signs, kind, sign, s, top):
                labels.append(Label(kind, sign, s))
                break
    return labels


@dataclass(frozen=True)
class ConvexitySignature:
    function: str
    orders_tested: int
    per_order: dict  # order -> Sign
    window: Interval
    samples_per_order: int
    tolerance: mpfr
    seed: int
    labels: tuple = ()
    dp_evidence: dict = field(default_factory=dict)  # p -> membership verdict string
    eventual: bool = False

    def label(self, kind: str) -> Optional[Label]:
        for lab in self.labels:
            if lab.kind == kind:
                return lab
        return None

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "orders_tested": self.orders_tested,
            "per_order": {str(k): v.value for k, v in sorted(self.per_order.items())},
            "window": [float(self.window.lower), float(self.window.upper)],
            "samples_per_order": self.samples_per_order,
            "tolerance": float(self.tolerance),
            "seed": self.seed,
            "labels": [str(lab) for lab in self.labels],
            "dp_evidence": {str(k): v for k, v in sorted(self.dp_evidence.items())},
            "evidence": "eventual" if self.eventual else "window",
        }


def classify(f: FuncHandle, P: int, window: Interval, samples: int = 200, tolerance=None,
             seed: int = DEFAULT_SEED, precision: int = DEFAULT_PRECISION,
             dp_n_max: Optional[int] = 2 ** 20) -> ConvexitySignature:
    """Verdicts for orders -1..P plus derived labels and D^p evidence.

    Set ``dp_n_max=None`` to skip the D^p checks (e.g. when f is not defined
    on the large integers).
    """
    if tolerance is None:
        tolerance = default_tolerance(f, window, samples, precision)
    signs = {p: test_order(f, p, window, samples, tolerance, seed, precision) for p in range(-1, P + 1)}
    dp = {}
    if dp_n_max is not None and f.domain.right_unbounded:
        for p in range(0, P + 1):
            try:
                dp[p] = dp_membership(f, p, dp_n_max, precision=precision).verdict.value
            except DomainError:
                dp[p] = "inconclusive"
    lo = window.lower
    eventual = lo is not None and lo > 0 and window.upper >= 10 * lo
    return ConvexitySignature(f.name, P, signs, window, samples, mpfr(tolerance), seed,
                              tuple(derive_labels(signs)), dp, bool(eventual))


@dataclass(frozen=True)
class TransferReport:
    p: int
    source_sign: Sign
    difference_sign: Sign
    holds: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_sign"] = self.source_sign.value
        d["difference_sign"] = self.difference_sign.value
        return d


def transfer_check(f: FuncHandle, p: int, window: Interval, samples: int = 200, tolerance=None,
                   seed: int = DEFAULT_SEED, precision: int = DEFAULT_PRECISION) -> TransferReport:
    """Check that the order-p sign of f reappears at order p-1 for x -> f(x+1) - f(x)."""
    if p < 0:
        raise ValueError("transfer needs p >= 0")
    source = test_order(f, p, window, samples, tolerance, seed, precision)
    df = forward_difference(f)
    target = test_order(df, p - 1, window, samples, tolerance, seed, precision)
    if source is Sign.ZERO:
        holds = target is Sign.ZERO
    elif source is Sign.MIXED:
        holds = False
    else:
        holds = target is source or target is Sign.ZERO
    return TransferReport(p, source, target, holds)
