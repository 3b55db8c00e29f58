import argparse

import numpy as np

from cli.dependencies import get_diagnostics_service, get_measure_service, get_rate_service
from cli.output import write_csv
from core.models import CDIOptions, ConvergeOptions, DualityOptions, GaussianBump, RunConfig


def add_parsers(subparsers, parents):
    parser = subparsers.add_parser("converge", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Gap between the discrete and the limit generator on a (k, x) grid.")
    parser.add_argument("--side", choices=["block", "fixation"])
    parser.add_argument("--k-list", dest="k_list", type=int, nargs="+")
    parser.add_argument("--x-min", dest="x_min", type=float)
    parser.add_argument("--x-max", dest="x_max", type=float)
    parser.add_argument("--x-step", dest="x_step", type=float)
    parser.add_argument("--center", type=float, help="Centre of the Gaussian test function.")
    parser.add_argument("--width", type=float, help="Width of the Gaussian test function.")
    parser.add_argument("--representation", choices=["direct", "expectation"])
    parser.set_defaults(options_model=ConvergeOptions)

    parser = subparsers.add_parser("duality", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Both sides of the Siegmund duality by uniformization.")
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--m", "--m0", dest="m0", type=int, required=True)
    parser.add_argument("--t", type=float, required=True)
    parser.add_argument("--cap", type=int)
    parser.set_defaults(options_model=DualityOptions)

    parser = subparsers.add_parser("cdi", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Partial sums of 1/η_k for the come-down-from-infinity criterion.")
    parser.add_argument("--k-max", dest="k_max", type=int)
    parser.set_defaults(options_model=CDIOptions)


def run_converge(run_config: RunConfig) -> int:
    options: ConvergeOptions = run_config.options
    params = get_measure_service().assumption_a_params(run_config.measure, run_config.b, run_config.tolerances.quad)
    f = GaussianBump(center=options.center, width=options.width)
    grid = np.arange(options.x_min, options.x_max + options.x_step / 2.0, options.x_step)
    table = get_diagnostics_service(threads=run_config.threads).generator_gap_table(
        f, params, options.k_list, grid, options.side, options.representation)
    rows = [(k, x, gap) for k, gaps in zip(table.k_list, table.gaps) for x, gap in zip(table.x_grid, gaps)]
    notes = [("side", table.side), ("representation", options.representation)]
    notes += [(f"sup k={k}", sup) for k, sup in zip(table.k_list, table.sup_per_k)]
    write_csv(run_config.output, ["k", "x", "gap"], rows, "generator gap |A_k f(x) - A f(x)|",
              "1/time", "sup_x |A_k f(x) - A f(x)| -> 0 as k -> ∞", notes=notes)
    return 0


def run_duality(run_config: RunConfig) -> int:
    options: DualityOptions = run_config.options
    result = get_diagnostics_service().duality_gap_exact(options.n, options.m0, options.t, run_config.measure,
                                                         options.cap, run_config.tolerances.duality)
    columns = ["n", "m0", "t", "lhs_lower", "lhs_upper", "rhs", "gap", "truncation_bound", "overflow_probability"]
    write_csv(run_config.output, columns, [[getattr(result, c) for c in columns]],
              "duality probabilities", "probability", "P(L_t^(m0) >= n) = P(N_t^(n) <= m0)",
              notes=[("cap", options.cap)])
    return 0


def run_cdi(run_config: RunConfig) -> int:
    options: CDIOptions = run_config.options
    report = get_rate_service().cdi_diagnostic(run_config.measure, options.k_max)
    rows = [(k, eta, s) for k, eta, s in zip(range(2, options.k_max + 1), report.eta, report.partial_sums)]
    write_csv(run_config.output, ["k", "eta", "partial_sum"], rows, "partial sums of 1/η_k", "time",
              "comes down from infinity iff Σ 1/η_k < ∞",
              notes=[("verdict_hint", report.verdict_hint), ("decade_ratio", report.decade_ratio),
                     ("authoritative", report.authoritative), ("authority", report.authority)])
    return 0


HANDLERS = {"converge": run_converge, "duality": run_duality, "cdi": run_cdi}
