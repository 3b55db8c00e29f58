import argparse

import numpy as np

from cli.dependencies import get_limit_service, get_measure_service
from cli.output import write_csv
from core.models import CFOptions, RunConfig, StationaryOptions

IDENTITIES = {
    "X": "φ_t(x) = exp(∫_0^t ψ(e^{-bs}x) ds)",
    "Y": "χ_t(y) = exp(∫_0^t ψ(-e^{bs}y) ds)",
    "stationary": "φ_∞(x) = exp(∫_0^∞ ψ(e^{-bs}x) ds)",
}


def add_parsers(subparsers, parents):
    parser = subparsers.add_parser("cf", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Characteristic function of X_t, Y_t or the stationary law.")
    parser.add_argument("--kind", choices=["X", "Y", "stationary"])
    parser.add_argument("--t", type=float)
    parser.add_argument("--x", type=float, help="Single point instead of a grid.")
    parser.add_argument("--x-min", dest="x_min", type=float)
    parser.add_argument("--x-max", dest="x_max", type=float)
    parser.add_argument("--x-step", dest="x_step", type=float)
    parser.add_argument("--method", choices=["quadrature", "bs-closed", "beta1b-closed"])
    parser.set_defaults(options_model=CFOptions)

    parser = subparsers.add_parser("stationary", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Samples from an inverted limit law, with its mean and variance.")
    parser.add_argument("--kind", choices=["X", "Y", "stationary"])
    parser.add_argument("--t", type=float)
    parser.add_argument("--samples", type=int)
    parser.set_defaults(options_model=StationaryOptions)


def run_cf(run_config: RunConfig) -> int:
    options: CFOptions = run_config.options
    params = get_measure_service().assumption_a_params(run_config.measure, run_config.b, run_config.tolerances.quad)
    service = get_limit_service()
    ce = service.char_exponent(params, options.method)
    if options.x is not None:
        grid = np.array([options.x])
    else:
        grid = np.arange(options.x_min, options.x_max + options.x_step / 2.0, options.x_step)
    table = service.cf_grid(ce, options.kind, options.t, grid)
    rows = [(x, re, im, abs(complex(re, im))) for x, re, im in zip(table.x_grid, table.re, table.im)]
    write_csv(run_config.output, ["x", "re", "im", "abs"], rows, f"characteristic function ({options.kind})",
              "dimensionless", IDENTITIES[options.kind],
              notes=[("t", options.t), ("b", params.b), ("a", params.a), ("method", ce.method)])
    return 0


def run_stationary(run_config: RunConfig) -> int:
    options: StationaryOptions = run_config.options
    params = get_measure_service().assumption_a_params(run_config.measure, run_config.b, run_config.tolerances.quad)
    service = get_limit_service()
    ce = service.char_exponent(params)
    cf = service.cf_function(ce, options.kind, options.t)
    mean, variance = service.law_moments(cf)
    draws = service.sample_limit_law(cf, options.samples, run_config.seed)
    write_csv(run_config.output, ["sample", "value"], enumerate(draws.tolist()),
              f"draws from the inverted law ({options.kind})", "dimensionless", IDENTITIES[options.kind],
              notes=[("t", options.t), ("mean", mean), ("variance", variance), ("seed", run_config.seed)])
    return 0


HANDLERS = {"cf": run_cf, "stationary": run_stationary}
