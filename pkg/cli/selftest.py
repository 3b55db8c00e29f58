"""Acceptance checks runnable from the command line.

``quick`` covers every deterministic identity; ``full`` adds the large
Monte-Carlo criteria and the wider quadrature sweep.
"""
import argparse
import functools
import logging
import math
import time
from typing import Callable, List, Tuple

import numpy as np

from cli.dependencies import (get_diagnostics_service, get_limit_service, get_measure_service, get_rate_repository,
                              get_rate_service, get_simulation_service)
from cli.output import write_csv
from core.exceptions import LambdaOUException
from core.models import BetaMeasure, GaussianBump, RunConfig, SelftestCheck, SelftestOptions
from core.specfun import EULER_GAMMA, digamma, log_gamma

logger = logging.getLogger(__name__)

Outcome = Tuple[float, float, bool]


def add_parsers(subparsers, parents):
    parser = subparsers.add_parser("selftest", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Run the acceptance checks; non-zero exit on any failure.")
    parser.add_argument("--level", choices=["quick", "full"])
    parser.set_defaults(options_model=SelftestOptions)


def _bs_params(b: float = 1.0):
    return get_measure_service().assumption_a_params(BetaMeasure(a=1.0, b=b), b)


def check_bs_cf() -> Outcome:
    service = get_limit_service()
    ce = service.char_exponent(_bs_params())
    x = np.arange(-10.0, 10.25, 0.5)
    worst = 0.0
    for t in (0.1, 1.0, 5.0):
        reference = np.exp(log_gamma(1.0 + 1j * x) - log_gamma(1.0 + 1j * math.exp(-t) * x))
        worst = max(worst, float(np.max(np.abs(service.phi_t(x, t, ce) - reference))))
    return worst, 1e-8, worst <= 1e-8


def check_drift_constant() -> Outcome:
    worst = 0.0
    for b in (0.5, 1.0, 2.0):
        a = _bs_params(b).a
        worst = max(worst, abs(a - b * (1.0 + digamma(b).real)))
    return worst, 1e-8, worst <= 1e-8


def _rate_sweep(k_max: int) -> Outcome:
    service = get_rate_service()
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        for b in (0.5, 1.0, 2.0):
            m = BetaMeasure(a=a, b=b)
            for k in range(2, k_max + 1):
                for j in range(1, k):
                    closed = service.block_rate(k, j, m)
                    quadrature = service.quadrature_block_rate(k, j, m)
                    worst = max(worst, abs(closed - quadrature) / abs(quadrature))
    return worst, 1e-10, worst <= 1e-10


def check_bs_rate_identities() -> Outcome:
    repository = get_rate_repository()
    m = BetaMeasure(a=1.0, b=1.0)
    worst = 0.0
    for k in range(2, 1001):
        j = np.arange(1, k, dtype=float)
        scaled = (k - j) / k * repository.block_row(k, m)
        worst = max(worst, float(np.max(np.abs(scaled * (k - j + 1.0) - 1.0))))
        s = np.arange(1, 1001, dtype=float)
        gamma = repository.fixation_row(k, m, 1000)
        worst = max(worst, float(np.max(np.abs(gamma * s * (s + 1.0) / k - 1.0))))
    return worst, 1e-12, worst <= 1e-12


def check_semigroup() -> Outcome:
    service = get_limit_service()
    x = np.arange(-5.0, 5.25, 0.5)
    worst = 0.0
    for b in (1.0, 2.0):
        ce = service.char_exponent(_bs_params(b))
        for s in (0.2, 1.0):
            for t in (0.3, 2.0):
                lhs = service.phi_t(x, t + s, ce)
                rhs = service.phi_t(math.exp(-b * s) * x, t, ce) * service.phi_t(x, s, ce)
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        for t in (0.3, 2.0):
            mirrored = service.phi_t(-math.exp(b * t) * x, t, ce)
            worst = max(worst, float(np.max(np.abs(service.chi_t(x, t, ce) - mirrored))))
    return worst, 1e-8, worst <= 1e-8


def check_exact_duality() -> Outcome:
    result = get_diagnostics_service().duality_gap_exact(10, 10, 0.5, BetaMeasure(a=1.0, b=1.0), 2000)
    inside = result.lhs_lower - 1e-8 <= result.rhs <= result.lhs_upper + 1e-8
    return result.gap, result.truncation_bound + 1e-8, inside and result.gap <= result.truncation_bound + 1e-8


def check_generator_trend() -> Outcome:
    table = get_diagnostics_service().generator_gap_table(GaussianBump(), _bs_params(), [100, 1000, 10000],
                                                          np.arange(-6.0, 6.25, 0.5))
    sup = table.sup_per_k
    ratio = sup[-1] / sup[0] if sup[0] > 0.0 else 0.0
    return ratio, 0.25, sup[0] > sup[1] > sup[2] and ratio < 0.25


def check_gumbel_moments() -> Outcome:
    service = get_limit_service()
    cf = service.cf_function(service.char_exponent(_bs_params()), "stationary")
    mean, variance = service.law_moments(cf)
    error = max(abs(-mean - EULER_GAMMA) / 1e-4, abs(variance - math.pi ** 2 / 6.0) / 1e-3)
    return error, 1.0, error <= 1.0


def check_cdi() -> Outcome:
    service = get_rate_service()
    expected = [((0.5, 1.0), "converges-evidence"), ((1.5, 1.0), "diverges-evidence"),
                ((1.0, 1.0), "diverges-evidence")]
    misses = sum(service.cdi_diagnostic(BetaMeasure(a=a, b=b), 10 ** 4).verdict_hint != hint
                 for (a, b), hint in expected)
    return float(misses), 0.0, misses == 0


@functools.lru_cache(maxsize=1)
def _mc_samples(seed: int) -> np.ndarray:
    samples = get_simulation_service().sample_scaled("block", 10 ** 6, _bs_params(), [1.0], 10 ** 4, seed)
    return np.sort([s.value for s in samples])


def check_mc_weak_convergence(seed: int) -> Outcome:
    service = get_limit_service()
    values = _mc_samples(seed)
    cdf = service.cdf_from_cf(service.cf_function(service.char_exponent(_bs_params()), "X", 1.0), values)
    count = values.size
    upper = np.arange(1, count + 1) / count
    distance = float(max(np.max(upper - cdf), np.max(cdf - (upper - 1.0 / count))))
    return distance, 0.03, distance <= 0.03


def check_mc_mean(seed: int) -> Outcome:
    expected = EULER_GAMMA * (1.0 - math.exp(-1.0))
    error = abs(-float(np.mean(_mc_samples(seed))) - expected)
    return error, 0.03, error <= 0.03


def acceptance_checks(level: str, seed: int) -> List[Tuple[str, str, Callable[[], Outcome]]]:
    checks = [
        ("bs-characteristic-function", "φ_t(x) = Γ(1+ix)/Γ(1+ie^{-t}x)", check_bs_cf),
        ("beta1b-drift-constant", "a = b(1+Ψ(b)) for Beta(1,b)", check_drift_constant),
        ("beta-rates-vs-quadrature", "q_{k,j} closed form = quadrature",
         lambda: _rate_sweep(50 if level == "full" else 12)),
        ("bs-rate-identities", "(k-j)/k·q_{k,j} = 1/(k-j+1); γ_{k,k+j} = k/(j(j+1))", check_bs_rate_identities),
        ("semigroup-identities", "φ_{t+s}(x) = φ_t(e^{-bs}x)φ_s(x); χ_t(y) = φ_t(-e^{bt}y)", check_semigroup),
        ("exact-duality", "P(L_t^(m) >= n) = P(N_t^(n) <= m)", check_exact_duality),
        ("generator-convergence-trend", "sup_x |A_k f - A f| -> 0", check_generator_trend),
        ("gumbel-stationary-moments", "-X_∞ ~ Gumbel: mean γ_E, variance π²/6", check_gumbel_moments),
        ("cdi-verdicts", "Beta(a,b) comes down from infinity iff 0 < a < 1", check_cdi),
    ]
    if level == "full":
        checks += [
            ("mc-weak-convergence", "log N_t - e^{-t} log n => X_t", lambda: check_mc_weak_convergence(seed)),
            ("mc-mean", "E[-X_t] = γ_E(1 - e^{-t})", lambda: check_mc_mean(seed)),
        ]
    return checks


def run_checks(level: str, seed: int) -> List[SelftestCheck]:
    results = []
    for name, identity, check in acceptance_checks(level, seed):
        started = time.perf_counter()
        try:
            value, threshold, passed = check()
            detail = ""
        except LambdaOUException as exc:
            value, threshold, passed, detail = None, None, False, f"{type(exc).__name__}: {exc.message}"
        seconds = time.perf_counter() - started
        if not passed:
            logger.warning("selftest check %s failed (value=%s threshold=%s) %s", name, value, threshold, detail)
        results.append(SelftestCheck(name=name, identity=identity, value=value, threshold=threshold,
                                     passed=passed, detail=detail, seconds=seconds))
    return results


def run_selftest(run_config: RunConfig) -> int:
    options: SelftestOptions = run_config.options
    results = run_checks(options.level, run_config.seed)
    rows = [(r.name, "pass" if r.passed else "fail", r.value, r.threshold, r.identity, r.detail) for r in results]
    failures = [r.name for r in results if not r.passed]
    write_csv(run_config.output, ["check", "status", "value", "threshold", "identity", "detail"], rows,
              f"acceptance checks ({options.level})", "per check", notes=[("failed", len(failures))])
    return 1 if failures else 0


HANDLERS = {"selftest": run_selftest}
