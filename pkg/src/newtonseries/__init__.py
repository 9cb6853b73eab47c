"""Newton forward-difference series, principal indefinite sums and
higher-order convexity checks in arbitrary precision."""

from .core import DEFAULT_PRECISION, DomainError, Interval, real, to_decimal, working_precision
from .registry import FuncHandle, lookup, lookup_spec

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PRECISION",
    "DomainError",
    "FuncHandle",
    "Interval",
    "lookup",
    "lookup_spec",
    "real",
    "to_decimal",
    "working_precision",
    "__version__",
]
