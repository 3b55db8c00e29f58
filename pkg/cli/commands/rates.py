import argparse

from cli.dependencies import get_rate_service
from cli.output import write_csv
from core.models import RatesOptions, RunConfig


def add_parsers(subparsers, parents):
    parser = subparsers.add_parser("rates", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Jump rates of the block counting process or the fixation line.")
    parser.add_argument("--kind", choices=["block", "fixation"])
    parser.add_argument("--k-max", dest="k_max", type=int, help="Largest state k.")
    parser.add_argument("--j-max", dest="j_max", type=int, help="Fixation targets k+1..k+j_max (default 10).")
    parser.add_argument("--no-compare", dest="compare", action="store_false",
                        help="Skip the independent quadrature check.")
    parser.set_defaults(options_model=RatesOptions)


def run_rates(run_config: RunConfig) -> int:
    options: RatesOptions = run_config.options
    service = get_rate_service()
    m = run_config.measure
    method = "closed" if service.has_closed_form(m) else "quadrature"
    rows = []
    if options.kind == "block":
        pairs = [(k, j) for k in range(2, options.k_max + 1) for j in range(1, k)]
        rate, check = service.block_rate, service.quadrature_block_rate
        quantity, identity = "block-counting jump rate q_{k,j}", "q_{k,j} = binom(k,j-1)∫u^{k-j-1}(1-u)^{j-1}Λ(du)"
    else:
        span = options.j_max or 10
        pairs = [(k, j) for k in range(1, options.k_max + 1) for j in range(k + 1, k + span + 1)]
        rate, check = service.fixation_rate, service.quadrature_fixation_rate
        quantity, identity = "fixation-line jump rate γ_{k,j}", "γ_{k,j} = binom(j,j-k+1)∫u^{j-k-1}(1-u)^kΛ(du)"
    for k, j in pairs:
        value = rate(k, j, m)
        rel_gap = None
        if options.compare:
            reference = check(k, j, m)
            rel_gap = abs(value - reference) / abs(reference) if reference != 0.0 else abs(value)
        rows.append((k, j, value, method, rel_gap))
    write_csv(run_config.output, ["k", "j", "rate", "method", "rel_gap"], rows, quantity, "1/time", identity)
    return 0


HANDLERS = {"rates": run_rates}
