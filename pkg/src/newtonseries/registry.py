"""Built-in test functions and adapters turning expressions into handles."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import gmpy2
from gmpy2 import mpfr

from . import expr as _expr
from .core import DomainError, Interval, working_precision

KNOWN_CM = "known-CM"
KNOWN_AM = "known-AM"
KNOWN_COUNTEREXAMPLE = "known-counterexample"
TAGS = frozenset({KNOWN_CM, KNOWN_AM, KNOWN_COUNTEREXAMPLE})

EvalFn = Callable[[mpfr, int], mpfr]
DerivFn = Callable[[int, mpfr, int], mpfr]
DiffFn = Callable[[mpfr, int, int], list]


class UnknownFunctionError(KeyError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class FuncHandle:
    """An evaluable real function together with what is known about it.

    ``evaluator(x, precision)`` computes f(x).  ``derivative(m, x, precision)``
    and ``closed_form(a, K, precision)`` are optional; the latter returns the
    list of forward differences Delta^k f(a) for k = 0..K.
    """

    name: str
    domain: Interval
    evaluator: EvalFn = field(repr=False)
    derivative: Optional[DerivFn] = field(default=None, repr=False)
    closed_form: Optional[DiffFn] = field(default=None, repr=False)
    tags: frozenset = frozenset()

    def __post_init__(self):
        unknown = set(self.tags) - TAGS
        if unknown:
            raise ValueError(f"unknown tags {sorted(unknown)}")

    def __call__(self, x, precision: int) -> mpfr:
        with working_precision(precision):
            x = mpfr(x)
            if not self.domain.contains(x):
                raise DomainError(f"{self.name}: x={x} outside domain {self.domain}")
            return self.evaluator(x, precision)

    def derivative_at(self, order: int, x, precision: int) -> mpfr:
        if self.derivative is None:
            raise MissingDerivativeError(f"{self.name} has no derivative evaluator")
        with working_precision(precision):
            x = mpfr(x)
            if not self.domain.contains(x):
                raise DomainError(f"{self.name}: x={x} outside domain {self.domain}")
            return self.derivative(order, x, precision)

    def closed_form_diff(self, k: int, a, precision: int) -> mpfr:
        """Delta^k f(a) from the closed form."""
        if self.closed_form is None:
            raise LookupError(f"{self.name} has no closed-form differences")
        with working_precision(precision):
            return self.closed_form(mpfr(a), k, precision)[k]


class MissingDerivativeError(LookupError):
    pass


# ---- built-ins ---------------------------------------------------------------

def _recip(x, prec):
    return 1 / x


def _recip_deriv(m, x, prec):
    return (-1) ** m * mpfr(math.factorial(m)) / x ** (m + 1)


def _recip_diffs(a, K, prec):
    out = [1 / a]
    for k in range(1, K + 1):
        out.append(out[-1] * (-k) / (a + k))
    return out


def _log(x, prec):
    return gmpy2.log(x)


def _log_deriv(m, x, prec):
    if m == 0:
        return gmpy2.log(x)
    return (-1) ** (m - 1) * mpfr(math.factorial(m - 1)) / x ** m


def _neg_exp(x, prec):
    return gmpy2.exp(-x)


def _neg_exp_deriv(m, x, prec):
    return (-1) ** m * gmpy2.exp(-x)


def _neg_exp_diffs(a, K, prec):
    ratio = gmpy2.exp(mpfr(-1)) - 1
    out = [gmpy2.exp(-a)]
    for _ in range(K):
        out.append(out[-1] * ratio)
    return out


def _sin_pi(x, prec):
    return gmpy2.sin(gmpy2.const_pi() * x)


def _sin_pi_deriv(m, x, prec):
    pi = gmpy2.const_pi()
    # sin^(m)(t) = sin(t + m pi/2); reduce the shift to avoid cancellation
    shift = m % 4
    s = [gmpy2.sin, gmpy2.cos, lambda t: -gmpy2.sin(t), lambda t: -gmpy2.cos(t)][shift]
    return pi ** m * s(pi * x)


def _log_over_x_neg(x, prec):
    return -gmpy2.log(x) / x


def _power_base(c_text: str):
    def base(prec):
        return 1 + mpfr(c_text)

    def evaluator(x, prec):
        return base(prec) ** x

    def derivative(m, x, prec):
        b = base(prec)
        return gmpy2.log(b) ** m * b ** x

    def diffs(a, K, prec):
        c = mpfr(c_text)
        out = [base(prec) ** a]
        for _ in range(K):
            out.append(out[-1] * c)
        return out

    return evaluator, derivative, diffs


def _make_power_base(params: Mapping[str, str]) -> FuncHandle:
    if set(params) - {"c"}:
        raise ParameterError(f"power_base takes only c, got {sorted(params)}")
    if "c" not in params:
        raise ParameterError("power_base needs parameter c")
    c_text = str(params["c"]).strip()
    try:
        c = mpfr(c_text, 256)
    except ValueError as exc:
        raise ParameterError(f"power_base: c={c_text!r} is not a number") from exc
    if not c > -1:
        raise ParameterError(f"power_base needs c > -1, got c={c_text}")
    evaluator, derivative, diffs = _power_base(c_text)
    tags = set()
    if c <= 0:
        tags.add(KNOWN_CM)
    if c >= 0:
        tags.add(KNOWN_AM)
    return FuncHandle(f"power_base[c={c_text}]", Interval.real_line(), evaluator, derivative, _own_precision(diffs),
                      frozenset(tags))


def _own_precision(diffs: DiffFn) -> DiffFn:
    """Run a closed form at its requested precision whatever the caller's context."""

    def wrapped(a, K, prec):
        with working_precision(prec):
            return diffs(mpfr(a), K, prec)

    return wrapped


def _simple(name, domain, evaluator, derivative=None, diffs=None, tags=()):
    if diffs is not None:
        diffs = _own_precision(diffs)

    def make(params):
        if params:
            raise ParameterError(f"{name} takes no parameters")
        return FuncHandle(name, domain, evaluator, derivative, diffs, frozenset(tags))
    return make


_BUILDERS = {
    "recip": _simple("recip", Interval.positive_reals(), _recip, _recip_deriv, _recip_diffs, {KNOWN_CM}),
    "log": _simple("log", Interval.positive_reals(), _log, _log_deriv),
    "neg_exp": _simple("neg_exp", Interval.real_line(), _neg_exp, _neg_exp_deriv, _neg_exp_diffs, {KNOWN_CM}),
    "power_base": _make_power_base,
    "sin_pi": _simple("sin_pi", Interval.positive_reals(), _sin_pi, _sin_pi_deriv, None, {KNOWN_COUNTEREXAMPLE}),
    "log_over_x_neg": _simple("log_over_x_neg", Interval.positive_reals(), _log_over_x_neg),
}

BUILTIN_NAMES = tuple(_BUILDERS)


def lookup(name: str, params: Optional[Mapping[str, str]] = None) -> FuncHandle:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownFunctionError(f"unknown function {name!r}; known: {', '.join(BUILTIN_NAMES)}") from None
    return builder(dict(params or {}))


_SPEC = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\[(.*)\])?\s*$")


def parse_function_spec(text: str) -> tuple[str, dict]:
    """Split ``name[key=value,...]`` into the name and a parameter dict."""
    m = _SPEC.match(text)
    if not m:
        raise ParameterError(f"bad function spec {text!r}; use name or name[key=value]")
    name, body = m.group(1), m.group(2)
    params = {}
    if body:
        for item in body.split(","):
            if "=" not in item:
                raise ParameterError(f"bad parameter {item!r} in {text!r}")
            key, value = item.split("=", 1)
            params[key.strip()] = value.strip()
    return name, params


def lookup_spec(text: str) -> FuncHandle:
    name, params = parse_function_spec(text)
    return lookup(name, params)


def from_expr(ast: _expr.Node, domain: Optional[Interval] = None, name: Optional[str] = None) -> FuncHandle:
    if domain is None:
        domain = Interval.positive_reals()

    def evaluator(x, prec):
        return _expr.evaluate(ast, x, prec)

    return FuncHandle(name or _expr.to_source(ast), domain, evaluator)


def from_callable(name: str, fn: EvalFn, domain: Interval) -> FuncHandle:
    return FuncHandle(name, domain, fn)


# ---- combinators used by the classifier and tests -----------------------------

def forward_difference(f: FuncHandle) -> FuncHandle:
    """x -> f(x+1) - f(x), on the same domain (fine for right-unbounded domains)."""
    if not f.domain.right_unbounded:
        raise DomainError("forward difference needs a right-unbounded domain")

    def evaluator(x, prec):
        return f(x + 1, prec) - f(x, prec)

    return FuncHandle(f"delta({f.name})", f.domain, evaluator)


def scaled(f: FuncHandle, factor) -> FuncHandle:
    def evaluator(x, prec):
        return mpfr(factor) * f(x, prec)

    deriv = None
    if f.derivative is not None:
        def deriv(m, x, prec):
            return mpfr(factor) * f.derivative_at(m, x, prec)

    return FuncHandle(f"{factor}*{f.name}", f.domain, evaluator, deriv)


def reflected(f: FuncHandle) -> FuncHandle:
    """x -> f(-x) on the reflected domain."""

    def evaluator(x, prec):
        return f(-x, prec)

    deriv = None
    if f.derivative is not None:
        def deriv(m, x, prec):
            return (-1) ** m * f.derivative_at(m, -x, prec)

    return FuncHandle(f"{f.name}(-x)", f.domain.reflected(), evaluator, deriv)
