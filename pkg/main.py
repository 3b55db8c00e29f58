import argparse
import json
import logging
import sys
import traceback
from typing import List, Optional

from pydantic import ValidationError

from cli import selftest
from cli.commands import diagnostics, limit, rates, simulate
from cli.dependencies import get_measure_service
from cli.middleware import RunContext
from cli.output import error_payload
from core.exceptions import DataValidationError, LambdaOUException, exit_code_for
from core.models import RunConfig, Tolerances
from data import config

logger = logging.getLogger(__name__)

# Register subcommands
COMMAND_MODULES = (rates, simulate, limit, diagnostics, selftest)
HANDLERS = {name: handler for module in COMMAND_MODULES for name, handler in module.HANDLERS.items()}

TOLERANCE_FLAGS = {"quad_tol": "quad", "cf_tol": "cf", "tail_tol": "tail", "inversion_tol": "inversion",
                   "duality_tol": "duality"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--measure", help="beta:a,b | lebesgue:c | atom:u,mass | @file.json | inline JSON")
    common.add_argument("--b", type=float, help="Lebesgue weight of Λ at 0 (implied for Beta(1,b)).")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="Output CSV path (standard output when omitted).")
    common.add_argument("--threads", type=int, help="Worker threads (default LAMBDA_OU_THREADS).")
    common.add_argument("--config", help="JSON file holding a whole RunConfig.")
    for flag in TOLERANCE_FLAGS:
        common.add_argument("--" + flag.replace("_", "-"), dest=flag, type=float)

    parser = argparse.ArgumentParser(prog="lambda-ou", parents=[common],
                                     description="Λ-coalescent block counting, fixation lines and their "
                                                 "Ornstein-Uhlenbeck type limits.")
    subparsers = parser.add_subparsers(dest="subcommand")
    for module in COMMAND_MODULES:
        module.add_parsers(subparsers, [common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = vars(args)
    try:
        if "config" in values:
            with open(values["config"], encoding="utf-8") as handle:
                return RunConfig.model_validate_json(handle.read())
        model = values["options_model"]
        options = model(**{key: value for key, value in values.items() if key in model.model_fields})
        tolerances = Tolerances(**{field: values[flag] for flag, field in TOLERANCE_FLAGS.items() if flag in values})
        measure = get_measure_service().load_measure(values["measure"]) if "measure" in values else None
        return RunConfig(subcommand=values["subcommand"], measure=measure, b=values.get("b"),
                         seed=values.get("seed", 0), output=values.get("out"),
                         threads=values.get("threads", config['threads']), tolerances=tolerances, options=options)
    except ValidationError as e:
        raise DataValidationError(str(e)) from e
    except OSError as e:
        raise DataValidationError(f"Cannot read config file: {e}") from e


def run(run_config: RunConfig) -> int:
    with RunContext(run_config) as context:
        context.status = HANDLERS[run_config.subcommand](run_config)
        return context.status


def handle_lambda_ou_exception(exc: LambdaOUException) -> int:
    logger.debug("run failed:\n%s", traceback.format_exc())
    print(json.dumps(error_payload(exc)), file=sys.stderr)
    return exit_code_for(exc)


def handle_generic_exception(exc: Exception) -> int:
    logger.error("unexpected failure:\n%s", traceback.format_exc())
    print(json.dumps(error_payload(exc)), file=sys.stderr)
    return 2


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "subcommand", None) is None and "config" not in vars(args):
        parser.print_help(sys.stderr)
        return 1
    try:
        return run(config_from_args(args))
    except LambdaOUException as exc:
        return handle_lambda_ou_exception(exc)
    except Exception as exc:
        return handle_generic_exception(exc)


if __name__ == "__main__":
    sys.exit(main())
