"""Self-verification suite behind ``newtonseries verify``.

Each check returns a :class:`Check` carrying the measured quantities, so the
CLI and the pytest acceptance module print the same PASS/FAIL lines.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable

from gmpy2 import const_pi, mpfr
from gmpy2 import exp as mp_exp
from gmpy2 import log as mp_log

from . import oracles
from .convexity import Sign, classify
from .core import DEFAULT_PRECISION, Interval, gen_binomial, working_precision
from .finitediff import build_table
from .newton import Status, eval_series, expand, fit_decay_slope, log_spaced, ratio_table, remainder_identity_check
from .registry import lookup
from .sigma import (
    MAX_AUTO_P,
    SigmaRequest,
    SigmaStatus,
    difference_equation_check,
    sigma_eval,
    sigma_handle,
    stern_series,
    wellposedness_check,
)

SEED = 1234

# 40 significant digits of Euler's constant; a sanity check only, never used in computation
EULER_GAMMA_40 = "0.5772156649015328606065120900824024310422"


@dataclass
class Check:
    key: str
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={v}" for k, v in self.measured.items())
        return f"{tag} [{self.key}] {self.title} ({self.seconds:.2f}s) {parts}"


def _timed(fn: Callable[[], Check]) -> Check:
    t0 = time.perf_counter()
    chk = fn()
    chk.seconds = time.perf_counter() - t0
    return chk


def _sci(v) -> str:
    return f"{float(v):.3e}"


# ---- newton ------------------------------------------------------------------

RECIP_ANCHORS = (1, 2.5)
RECIP_POINTS = (0.5, 2.5, 7.3)


def recip_golden_point(a, x, precision: int = 256, max_terms: int = 10 ** 4, tol: float = 1e-10) -> Check:
    """One point of the 1/x golden-value check, certified by the remainder bound.

    b sits 0.4 below min(a, x): the bound is only valid for b < min(a, x).
    """
    t0 = time.perf_counter()
    recip = lookup("recip")
    exp = expand(recip, a, max_terms, precision)
    with working_precision(precision):
        b = min(mpfr(a), mpfr(x)) - mpfr("0.4")
    rep = eval_series(exp, x, tol, max_terms, b=b, q=0)
    elapsed = time.perf_counter() - t0
    with working_precision(precision):
        err = abs(rep.value - 1 / mpfr(x))
    # x = a is the exact one-term case; its remainder is identically zero
    certified = rep.status is Status.CONVERGED_BOUNDED or (
        rep.status is Status.FINITE_EXACT and rep.remainder_bound == 0)
    ok = err <= tol and certified and rep.terms_used <= max_terms and elapsed < 5
    return Check(f"C1 a={a} x={x}", "Newton series of 1/x vs 1/x", ok,
                 {"error": _sci(err), "status": rep.status.value, "terms": rep.terms_used,
                  "bound": _sci(rep.remainder_bound) if rep.remainder_bound is not None else "none",
                  "b": float(b)})


def check_recip_golden() -> list:
    return [_timed(lambda a=a, x=x: recip_golden_point(a, x)) for a in RECIP_ANCHORS for x in RECIP_POINTS]


def remainder_cases(count: int = 50, seed: int = SEED) -> list:
    rng = random.Random(seed)
    names = ("recip", "log", "neg_exp")
    cases = []
    while len(cases) < count:
        name = names[len(cases) % 3]
        n = rng.randint(0, 20)
        if name == "neg_exp":
            a = round(rng.uniform(-3, 3), 6)
            x = round(rng.uniform(-3, 6), 6)
        else:
            a = round(rng.uniform(0.5, 5), 6)
            x = round(rng.uniform(0.2, 10), 6)
        d = x - a
        if n and abs(d - round(d)) < 1e-3 and 0 <= round(d) < n:
            continue
        cases.append((name, a, x, n))
    return cases


def check_remainder_identity() -> Check:
    def run():
        worst = mpfr(0)
        worst_case = None
        for name, a, x, n in remainder_cases():
            r = remainder_identity_check(lookup(name), a, x, n, 256)
            if r > worst:
                worst, worst_case = r, (name, a, x, n)
        return Check("C2", "remainder identity, 50 random cases at 256 bits", worst <= 1e-28,
                     {"max_residual": _sci(worst), "worst_case": worst_case})
    chk = _timed(run)
    chk.passed = chk.passed and chk.seconds < 10
    return chk


def check_divergence() -> Check:
    def run():
        grow = lookup("power_base", {"c": "2"})
        rep = eval_series(expand(grow, 0, 1000), "0.5", 1e-10, 1000)
        shrink = lookup("power_base", {"c": "0.5"})
        exp = expand(shrink, 0, 1000)
        errs = []
        statuses = []
        for x in ("0.3", "0.5", "2.7", "-1.4"):
            r = eval_series(exp, x, 1e-12, 1000)
            with working_precision(exp.table.working_precision):
                oracle = mp_exp(mpfr(x) * mp_log(mpfr("1.5")))
                errs.append(abs(r.value - oracle))
            statuses.append(r.status.value)
        ok = rep.status is Status.DIVERGED and rep.terms_used <= 1000 and max(errs) <= 1e-10 and \
            all(s in ("converged_heuristic", "finite_exact") for s in statuses)
        return Check("C3", "divergence for c=2, convergence for c=0.5", ok,
                     {"c2_status": rep.status.value, "c2_terms": rep.terms_used,
                      "c05_max_error": _sci(max(errs)), "c05_status": statuses})
    return _timed(run)


def decay_slope(x, a, b, lo: int = 100, hi: int = 10 ** 4, points: int = 12) -> float:
    rows = ratio_table(x, a, b, log_spaced(lo, hi, points))
    return fit_decay_slope(rows)


def check_ratio_slopes() -> list:
    out = []
    for x, expected in ((2, -1.5), (3, -2.5)):
        def run(x=x, expected=expected):
            slope = decay_slope(x, 1, 0.5)
            ok = not math.isnan(slope) and abs(slope - expected) <= 0.1
            return Check(f"C4 x={x}", f"falling-ratio decay exponent {expected}", ok,
                         {"slope": "undefined (ratio vanishes: x-a is an integer)" if math.isnan(slope)
                          else f"{slope:.4f}"})
        out.append(_timed(run))
    return out


# ---- sigma -------------------------------------------------------------------

def check_sigma_log_gamma() -> Check:
    def run():
        log = lookup("log")
        errs = {}
        rates = {}
        n_final = {}
        for x in ("0.5", "1.5", "4.2"):
            res = sigma_eval(SigmaRequest(log, mpfr(x, 160), 1e-7, 2, 2 ** 20))
            errs[x] = abs(res.value - oracles.log_gamma(x))
            rates[x] = None if res.empirical_rate is None else round(res.empirical_rate, 3)
            n_final[x] = res.n_final
        at1 = sigma_eval(SigmaRequest(log, mpfr(1), 1e-6, 2, 2 ** 20))
        ok = max(errs.values()) <= 1e-6 and abs(at1.value) <= 1e-5
        return Check("C5", "Sigma log vs ln Gamma (p=2)", ok,
                     {"max_error": _sci(max(errs.values())), "sigma_at_1": _sci(at1.value),
                      "n_final": n_final, "empirical_rate": rates})
    chk = _timed(run)
    chk.passed = chk.passed and chk.seconds < 60
    return chk


def check_sigma_digamma() -> Check:
    def run():
        recip = lookup("recip")
        errs = {}
        for x in ("1.5", "2", "3.5"):
            res = sigma_eval(SigmaRequest(recip, mpfr(x, 160), 1e-7))
            errs[x] = abs(res.value - (oracles.digamma(x) + oracles.euler_gamma()))
        stern = stern_series("3.5", 1e-9, 10 ** 4)
        stern_err = abs(stern.value - (oracles.digamma("3.5") + oracles.euler_gamma()))
        ok = max(errs.values()) <= 1e-6 and stern_err <= 1e-6 and stern.terms_used <= 10 ** 4
        return Check("C6", "Sigma(1/x) and Stern's series vs psi + gamma", ok,
                     {"max_error": _sci(max(errs.values())), "stern_error": _sci(stern_err),
                      "stern_terms": stern.terms_used, "stern_status": stern.status.value,
                      "term_decay_exponent": f"{stern_term_decay('3.5'):.3f}"})
    return _timed(run)


def stern_term_decay(x, lo: int = 100, hi: int = 10 ** 4, points: int = 12) -> float:
    """Fitted exponent r in |C(x-1, k) / k| ~ k^r."""
    rows = []
    with working_precision(DEFAULT_PRECISION):
        for k in log_spaced(lo, hi, points):
            t = abs(gen_binomial(mpfr(x) - 1, k, DEFAULT_PRECISION) / k)
            rows.append((math.log(k), float(mp_log(t))))
    return statistics.linear_regression([r[0] for r in rows], [r[1] for r in rows]).slope


def check_hermite() -> Check:
    def run():
        log = lookup("log")
        # a high fixed p makes each limit converge like n^-p, keeping the 13 evaluations fast
        sig = sigma_handle(log, tol=1e-13, p=MAX_AUTO_P)
        computed = build_table(sig, 1, 12, 128)
        reference = build_table(log, 1, 11, 128)
        diffs = [abs(computed[k] - reference[k - 1]) for k in range(1, 13)]
        ok = max(diffs) <= 1e-6 and abs(computed[0]) <= 1e-6
        return Check("C7", "Newton coefficients of Sigma log at 1 vs Delta^(k-1) ln", ok,
                     {"max_coefficient_error": _sci(max(diffs))})
    return _timed(run)


def check_wellposedness() -> Check:
    def run():
        ns = [2 ** k for k in range(8, 17)]
        vals = wellposedness_check(lookup("log"), 1, 3, "2.5", ns)
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        ok = decreasing and vals[-1] < 1e-4
        return Check("C8", "|f_n^3 - f_n^1| for log at x=2.5", ok,
                     {"decreasing": decreasing, "last": _sci(vals[-1])})
    return _timed(run)


def check_difference_equation() -> Check:
    def run():
        tol = 1e-8
        worst = {}
        for name in ("log", "recip", "log_over_x_neg"):
            g = lookup(name)
            worst[name] = max(difference_equation_check(g, x, tol).residual for x in ("1.5", "2", "3.3"))
        ok = all(v < 4 * tol for v in worst.values())
        return Check("C10", "Sigma g(x+1) - Sigma g(x) = g(x)", ok,
                     {k: _sci(v) for k, v in worst.items()})
    return _timed(run)


# ---- classify ----------------------------------------------------------------

def _alternates(sig, start_sign: int) -> bool:
    return all(sig.per_order[p].admits(start_sign * (-1) ** (p + 1)) for p in sig.per_order)


def check_classifier() -> Check:
    def run():
        window = Interval.closed(1, 50)
        recip = classify(lookup("recip"), 8, window, 200, 1e-20, seed=SEED)
        log = classify(lookup("log"), 8, window, 200, 1e-20, seed=SEED)
        sin = classify(lookup("sin_pi"), 3, window, 200, 1e-20, seed=SEED)
        nexp = classify(lookup("neg_exp"), 8, window, 200, 1e-20, seed=SEED)

        def has(sig, text):
            return text in [str(lab) for lab in sig.labels]

        recip_ok = has(recip, "CM^0_{+1}") and _alternates(recip, 1)
        log_ok = has(log, "CM^1_{+1}") and log.per_order[0] is Sign.PLUS and not has(log, "CM^0_{+1}")
        sin_ok = all(sin.per_order[p] is Sign.MIXED for p in range(0, 4)) and not sin.labels
        nexp_ok = has(nexp, "CM^0_{+1}") and _alternates(nexp, 1)
        return Check("C9", "classifier signatures", recip_ok and log_ok and sin_ok and nexp_ok,
                     {"recip": [str(x) for x in recip.labels], "log": [str(x) for x in log.labels],
                      "sin_pi": [s.value for s in sin.per_order.values()],
                      "neg_exp": [str(x) for x in nexp.labels]})
    chk = _timed(run)
    chk.passed = chk.passed and chk.seconds < 30
    return chk


# ---- oracles -----------------------------------------------------------------

def check_oracles(precision: int = 128) -> Check:
    def run():
        rng = random.Random(SEED)
        tol = mpfr(2) ** (-precision + 20)
        worst_lg = mpfr(0)
        worst_psi = mpfr(0)
        for _ in range(100):
            with working_precision(precision):
                x = mpfr(rng.uniform(0, 50))
                if x == 0:
                    continue
                worst_lg = max(worst_lg, abs(oracles.log_gamma(x + 1, precision) - oracles.log_gamma(x, precision) - mp_log(x)))
                worst_psi = max(worst_psi, abs(oracles.digamma(x + 1, precision) - oracles.digamma(x, precision) - 1 / x))
        with working_precision(precision):
            half = abs(oracles.log_gamma("0.5", precision) - mp_log(const_pi()) / 2)
            g = oracles.euler_gamma(precision)
            psi1 = abs(oracles.digamma(1, precision) + g)
            g2 = oracles.euler_gamma_euler_maclaurin(precision)
            agree = abs(g - g2)
            sanity = abs(g - mpfr(EULER_GAMMA_40, precision))
        ok = worst_lg <= tol and worst_psi <= tol and half <= tol and psi1 <= tol and agree < 1e-30 \
            and sanity < 1e-38
        return Check("C11", "oracle self-tests", ok,
                     {"lgamma_recurrence": _sci(worst_lg), "psi_recurrence": _sci(worst_psi),
                      "lgamma_half": _sci(half), "psi1_plus_gamma": _sci(psi1),
                      "gamma_two_routes": _sci(agree)})
    return _timed(run)


SUITES = {
    "newton": (check_recip_golden, check_remainder_identity, check_divergence, check_ratio_slopes),
    "sigma": (check_sigma_log_gamma, check_sigma_digamma, check_hermite, check_wellposedness,
              check_difference_equation),
    "classify": (check_classifier,),
    "oracle": (check_oracles,),
}


def run_suite(name: str = "all") -> list:
    names = list(SUITES) if name == "all" else [name]
    results = []
    for suite in names:
        for fn in SUITES[suite]:
            t0 = time.perf_counter()
            try:
                out = fn()
            except Exception as exc:  # a crashing check is a failing check
                out = Check(fn.__name__, "raised", False, {"error": f"{type(exc).__name__}: {exc}"},
                            time.perf_counter() - t0)
            results.extend(out if isinstance(out, list) else [out])
    return results
