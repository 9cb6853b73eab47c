"""Command-line interface: ``newtonseries <command> [flags]``.

Exit codes: 0 for results (divergence and mixed classifications included),
1 when ``verify`` has a failing check, 2 for usage errors and 3 for domain or
evaluation errors.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional

from gmpy2 import mpfr

from . import __version__
from . import expr as _expr
from .convexity import DEFAULT_SEED, classify
from .core import DEFAULT_PRECISION, DomainError, Interval, check_precision, real, to_decimal, working_precision
from .newton import (
    ClosedFormMismatch,
    InvalidCertificate,
    Status,
    _is_zero_series,
    eval_series,
    expand,
    fit_decay_slope,
    log_spaced,
    ratio_table,
)
from .registry import FuncHandle, ParameterError, UnknownFunctionError, from_expr, lookup_spec
from .sigma import SigmaRequest, SigmaStatus, sigma_eval
from .verification import SUITES, run_suite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3

FIRST_TABLE_ORDER = 63


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---- argument helpers ----------------------------------------------------------

def _function(args) -> FuncHandle:
    if args.fn and args.expr:
        raise UsageError("give either --fn or --expr, not both")
    if args.fn:
        return lookup_spec(args.fn)
    if args.expr:
        domain = Interval.real_line() if args.domain == "real" else Interval.positive_reals()
        return from_expr(_expr.parse(args.expr), domain, args.expr)
    raise UsageError("one of --fn or --expr is required")


def _grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--grid expects START:END:COUNT, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--grid expects START:END:COUNT, got {text!r}") from None
    if not lo < hi or count < 2:
        raise UsageError("--grid needs START < END and COUNT >= 2")
    return Interval.closed(lo, hi), count


def _num(v, prec: int) -> Optional[str]:
    if v is None:
        return None
    if isinstance(v, (int, str)):
        return str(v)
    if not isinstance(v, type(mpfr(0))):
        v = real(v, prec)
    return to_decimal(v, prec)


# ---- output ------------------------------------------------------------------

def _record(command: str, args, inputs: dict, result: dict, status: str, rows=None,
            seed: Optional[int] = None) -> dict:
    rec = {
        "command": command,
        "inputs": inputs,
        "precision": args.prec,
        "seed": seed,
        "tool_version": __version__,
        "status": status,
        "result": result,
    }
    if rows is not None:
        rec["rows"] = rows
    return rec


def _emit(rec: dict, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(rec, out, indent=2)
        out.write("\n")
        return
    if fmt == "csv":
        buf = io.StringIO()
        rows = rec.get("rows")
        if rows is None:
            rows = [{"status": rec["status"], **rec["result"]}]
        fields = list(rows[0]) if rows else []
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(v) for k, v in row.items()})
        out.write(buf.getvalue())
        return
    out.write(f"{rec['command']}: {rec['status']}\n")
    for k, v in rec["result"].items():
        out.write(f"  {k}: {_text_cell(v)}\n")
    rows = rec.get("rows")
    if rows:
        fields = list(rows[0])
        cells = [[_text_cell(r[f]) for f in fields] for r in rows]
        widths = [max(len(f), *(len(c[i]) for c in cells)) for i, f in enumerate(fields)]
        out.write("  ".join(f.rjust(w) for f, w in zip(fields, widths)) + "\n")
        for c in cells:
            out.write("  ".join(v.rjust(w) for v, w in zip(c, widths)) + "\n")


def _csv_cell(v):
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return "" if v is None else v


def _text_cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v) if v else "(none)"
    if isinstance(v, dict):
        return ", ".join(f"{k}={x}" for k, x in v.items())
    return str(v)


# ---- commands ----------------------------------------------------------------

def cmd_expand(args, out) -> int:
    f = _function(args)
    if args.terms < 0:
        raise UsageError("--terms must be nonnegative")
    exp = expand(f, real(args.anchor, args.prec), args.terms, args.prec)
    a_text = _num(exp.anchor, args.prec)
    rows = [{"k": k, "delta_k": _num(exp.coefficient(k), args.prec), "basis": f"C(x-{a_text},{k})"}
            for k in range(exp.order + 1)]
    zero = _is_zero_series(exp.table, exp.order + 1, args.prec)
    flags = ["all_zero_coefficients"] if zero else []
    result = {"function": f.name, "anchor": a_text, "terms": exp.order + 1,
              "source": exp.table.source, "flags": flags}
    inputs = {"fn": args.fn, "expr": args.expr, "anchor": args.anchor, "terms": args.terms}
    _emit(_record("expand", args, inputs, result, "ok", rows), args.format, out)
    return EXIT_OK


def evaluate_growing(f: FuncHandle, a, x, tol, max_terms: int, b, q, precision: int):
    """eval with a coefficient table that doubles until a stopping rule fires.

    Every stopping rule only looks at a prefix of the table, so the report is
    the one a full max_terms table would give.
    """
    if f.closed_form is not None:
        return eval_series(expand(f, a, max_terms - 1, precision), x, tol, max_terms, b, q)
    K = min(FIRST_TABLE_ORDER, max_terms - 1)
    while True:
        if q is not None:
            K = max(K, q)
        rep = eval_series(expand(f, a, K, precision), x, tol, min(max_terms, K + 1), b, q)
        if rep.status is not Status.MAX_TERMS or K + 1 >= max_terms:
            return rep
        K = min(2 * K + 1, max_terms - 1)


def cmd_eval(args, out) -> int:
    f = _function(args)
    if args.max_terms < 1:
        raise UsageError("--max-terms must be positive")
    if args.q is not None and args.q < 0:
        raise UsageError("--q must be nonnegative")
    if args.b is not None and args.q is None:
        raise UsageError("--b needs a certificate order --q")
    p = args.prec
    a = real(args.anchor, p)
    x = real(args.x, p)
    b = real(args.b, p) if args.b is not None else None
    rep = evaluate_growing(f, a, x, real(args.tol, p), args.max_terms, b, args.q, p)
    result = {
        "function": f.name,
        "value": _num(rep.value, p),
        "terms_used": rep.terms_used,
        "remainder_bound": _num(rep.remainder_bound, p),
        "b_used": _num(rep.b_used, p),
        "last_term": _num(rep.last_term, p),
        "flags": list(rep.flags),
    }
    inputs = {"fn": args.fn, "expr": args.expr, "anchor": args.anchor, "x": args.x, "tol": args.tol,
              "max_terms": args.max_terms, "b": args.b, "q": args.q}
    _emit(_record("eval", args, inputs, result, rep.status.value), args.format, out)
    return EXIT_OK


def cmd_sigma(args, out) -> int:
    g = _function(args)
    if args.p is not None and not 0 <= args.p:
        raise UsageError("--p must be nonnegative")
    if args.max_n < 128:
        raise UsageError("--max-n must be at least 128")
    p = args.prec
    x = real(args.x, p)
    res = sigma_eval(SigmaRequest(g, x, float(args.tol), args.p, args.max_n, p, args.extrapolate))
    if res.status is SigmaStatus.P_REJECTED:
        raise DomainError(f"{g.name}: no p <= 8 shows Delta^p g(n) -> 0; pass --p explicitly")
    # the defining difference equation at x, with the same p
    nxt = sigma_eval(SigmaRequest(g, x + 1, float(args.tol), res.p_used, args.max_n, p))
    with working_precision(p + 32):
        residual = abs(nxt.value - res.value - g(x, p + 32))
    result = {
        "function": g.name,
        "value": _num(res.value, p),
        "p_used": res.p_used,
        "p_min": res.p_min,
        "n_final": res.n_final,
        "successive_delta": _num(res.successive_delta, p),
        "empirical_rate": None if res.empirical_rate is None else f"{res.empirical_rate:.4f}",
        "normalization_residual": _num(res.normalization_residual, p),
        "difference_equation_residual": _num(residual, p),
        "extrapolated": _num(res.extrapolated, p),
    }
    inputs = {"fn": args.fn, "expr": args.expr, "x": args.x, "p": args.p, "tol": args.tol,
              "max_n": args.max_n, "extrapolate": args.extrapolate}
    _emit(_record("sigma", args, inputs, result, res.status.value), args.format, out)
    return EXIT_OK


def cmd_classify(args, out) -> int:
    f = _function(args)
    if args.orders < -1:
        raise UsageError("--orders must be >= -1")
    window, count = _grid(args.grid)
    tol = real(args.tol, args.prec) if args.tol is not None else None
    sig = classify(f, args.orders, window, count, tol, args.seed, args.prec,
                   dp_n_max=2 ** 20 if args.dp else None)
    rows = [{"order": k, "sign": v.value} for k, v in sorted(sig.per_order.items())]
    d = sig.to_dict()
    result = {"function": f.name, "labels": d["labels"], "tolerance": _num(sig.tolerance, args.prec),
              "dp_evidence": d["dp_evidence"], "evidence": d["evidence"]}
    status = "labelled" if sig.labels else "mixed" if any(
        r["sign"] == "mixed" for r in rows) else "unlabelled"
    inputs = {"fn": args.fn, "expr": args.expr, "orders": args.orders, "grid": args.grid, "tol": args.tol}
    _emit(_record("classify", args, inputs, result, status, rows, seed=args.seed), args.format, out)
    return EXIT_OK


def ratio_rows(n_max: int) -> list:
    if n_max <= 200:
        return list(range(0, n_max + 1))
    return [0] + log_spaced(1, n_max, 60)


def cmd_ratio(args, out) -> int:
    if args.n_max < 1:
        raise UsageError("--n-max must be positive")
    p = args.prec
    x, a, b = real(args.x, p), real(args.a, p), real(args.b, p)
    table = ratio_table(x, a, b, ratio_rows(args.n_max), p)
    rows = [{"n": n, "ratio_log": _num(lr, p) if s != 0 else "-inf", "sign": s} for n, lr, s in table]
    # slope over the last decade, where the power law has settled
    lo = max(1, args.n_max // 100) if args.n_max >= 100 else 1
    fit_rows = [r for r in table if r[0] >= lo]
    slope = fit_decay_slope(fit_rows)
    result = {"fitted_slope": None if math.isnan(slope) else f"{slope:.6f}",
              "fit_range": [lo, args.n_max]}
    inputs = {"x": args.x, "a": args.a, "b": args.b, "n_max": args.n_max}
    status = "ok" if not math.isnan(slope) else "slope_undefined"
    _emit(_record("ratio", args, inputs, result, status, rows), args.format, out)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    checks = run_suite(args.suite)
    if args.format == "text":
        for c in checks:
            out.write(c.line() + "\n")
            out.flush()
    else:
        rows = [{"check": c.key, "title": c.title, "passed": c.passed, "seconds": round(c.seconds, 3),
                 "measured": {k: str(v) for k, v in c.measured.items()}} for c in checks]
        passed = sum(c.passed for c in checks)
        status = "pass" if passed == len(checks) else "fail"
        rec = _record("verify", args, {"suite": args.suite}, {"passed": passed, "total": len(checks)},
                      status, rows)
        _emit(rec, args.format, out)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


# ---- parser ------------------------------------------------------------------

def _precision(text: str) -> int:
    try:
        return check_precision(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--prec", type=_precision, default=DEFAULT_PRECISION,
                        help="working precision in bits (default 128)")
    common.add_argument("--format", choices=("text", "json", "csv"), default="text")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--fn", help="built-in function, e.g. recip or power_base[c=0.5]")
    source.add_argument("--expr", help="expression in x, e.g. \"-ln(x)/x\"")
    source.add_argument("--domain", choices=("positive", "real"), default="positive",
                        help="domain assumed for --expr (default: x > 0)")

    parser = _Parser(prog="newtonseries", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("expand", parents=[common, source], help="Newton coefficients Delta^k f(a)")
    p.add_argument("--anchor", required=True)
    p.add_argument("--terms", type=int, required=True, help="highest order K")
    p.set_defaults(handler=cmd_expand)

    p = sub.add_parser("eval", parents=[common, source], help="sum a Newton series at x")
    p.add_argument("--anchor", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--tol", default="1e-12")
    p.add_argument("--max-terms", type=int, default=10 ** 4)
    p.add_argument("--b", help="lower point for the remainder bound (needs --q)")
    p.add_argument("--q", type=int, help="certificate order: f^(q) is completely monotone up to sign")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sigma", parents=[common, source], help="principal indefinite sum at x")
    p.add_argument("--x", required=True)
    p.add_argument("--p", type=int)
    p.add_argument("--tol", default="1e-8")
    p.add_argument("--max-n", type=int, default=2 ** 20)
    p.add_argument("--extrapolate", action="store_true")
    p.set_defaults(handler=cmd_sigma)

    p = sub.add_parser("classify", parents=[common, source], help="convexity signature on a window")
    p.add_argument("--orders", type=int, default=8)
    p.add_argument("--grid", default="1:50:200", help="START:END:COUNT")
    p.add_argument("--tol")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--no-dp", dest="dp", action="store_false", help="skip the Delta^p tail checks")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("ratio", parents=[common], help="falling-factorial ratio table")
    p.add_argument("--x", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--n-max", type=int, default=10 ** 4)
    p.set_defaults(handler=cmd_ratio)

    p = sub.add_parser("verify", parents=[common], help="run the self-verification suite")
    p.add_argument("--suite", choices=("all",) + tuple(SUITES), default="all")
    p.set_defaults(handler=cmd_verify)
    return parser


def _join_expr(argv: list) -> list:
    """Glue ``--expr VALUE`` together so values like "-ln(x)/x" are not read as flags."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--expr":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--expr={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    argv = _join_expr(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
        return args.handler(args, out)
    except (UsageError, _expr.ExprSyntaxError, UnknownFunctionError, ParameterError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        err.write(f"newtonseries: error: {msg}\n")
        return EXIT_USAGE
    except (DomainError, InvalidCertificate, ClosedFormMismatch, ZeroDivisionError) as exc:
        err.write(f"newtonseries: {type(exc).__name__}: {exc}\n")
        return EXIT_DOMAIN
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
