import argparse

from cli.dependencies import get_measure_service, get_simulation_service
from cli.output import write_csv
from core.exceptions import DataValidationError
from core.models import RunConfig, SimulateOptions


def add_parsers(subparsers, parents):
    parser = subparsers.add_parser("simulate", parents=parents, argument_default=argparse.SUPPRESS,
                                   help="Exact simulation of N^(n) or L^(n) and the scaled states.")
    parser.add_argument("--kind", choices=["block", "fixation"])
    parser.add_argument("--n", type=int, required=True, help="Initial state.")
    parser.add_argument("--times", type=float, nargs="+", help="Sorted query times.")
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--cap", type=int, help="Fixation-line state cap.")
    parser.add_argument("--strategy", choices=["auto", "poisson", "table"])
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--events", action="store_true", help="Emit the event list of a single path instead.")
    parser.set_defaults(options_model=SimulateOptions)


def run_simulate(run_config: RunConfig) -> int:
    options: SimulateOptions = run_config.options
    service = get_simulation_service(threads=run_config.threads, batch_size=options.batch_size)
    m = run_config.measure
    if options.events:
        if options.replicates != 1:
            raise DataValidationError("--events writes a single path; use --replicates 1.")
        horizon = options.times[-1]
        if options.kind == "block":
            path = service.simulate_block_path(options.n, m, horizon, run_config.seed, options.strategy)
        else:
            path = service.simulate_fixation_path(options.n, m, horizon, options.cap, run_config.seed,
                                                  options.strategy)
        rows = [(index, t, state) for index, (t, state) in
                enumerate(zip(path.event_times[1:], path.states[1:]), start=1)]
        write_csv(run_config.output, ["event", "time", "state"], rows, f"{options.kind} path events",
                  "time; state count", notes=[("initial_state", path.initial_state), ("horizon", horizon),
                                              ("capped", path.capped)])
        return 0

    params = get_measure_service().assumption_a_params(m, run_config.b, run_config.tolerances.quad)
    samples = service.sample_scaled(options.kind, options.n, params, options.times, options.replicates,
                                    run_config.seed, options.cap, options.strategy)
    rows = [(s.replicate_id, s.t, s.raw_state, s.value, s.capped) for s in samples]
    scaling = "log N_t - e^{-bt} log n" if options.kind == "block" else "log L_t - e^{bt} log n"
    write_csv(run_config.output, ["replicate", "t", "raw_state", "scaled_value", "capped"], rows,
              f"scaled {options.kind} state {scaling}", "dimensionless",
              notes=[("n", options.n), ("b", params.b), ("seed", run_config.seed)])
    return 0


HANDLERS = {"simulate": run_simulate}
