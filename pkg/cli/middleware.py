import logging
import threading
from datetime import datetime

from core import make_run_id
from core.exceptions import exit_code_for
from core.models import RunConfig
from data import config
from service import get_run_id, set_run_id

logger = logging.getLogger(__name__)

# RunConfig tolerances that override the environment for the duration of a run
TOLERANCE_KEYS = {
    'quad': 'quad_tol',
    'cf': 'cf_tol',
    'tail': 'tail_tol',
    'inversion': 'inversion_tol',
}


class RunContext:
    """Scope of one CLI run: run id, configuration overrides and start/end log lines."""

    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.status = 0
        self._saved = {}
        self._started = None

    def __enter__(self):
        set_run_id(make_run_id())
        self._saved = {key: config[key] for key in list(TOLERANCE_KEYS.values()) + ['threads']}
        tolerances = self.run_config.tolerances
        for field, key in TOLERANCE_KEYS.items():
            config[key] = getattr(tolerances, field)
        config['threads'] = self.run_config.threads
        self._started = datetime.now()
        self.log_start(self.run_config)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        duration = datetime.now() - self._started
        status = exit_code_for(exc_val) if exc_val is not None else self.status
        self.log_end(duration, self.run_config, status)
        config.update(self._saved)
        set_run_id("")
        return False

    @staticmethod
    def log_start(run_config: RunConfig):
        logger.info("RUN START: %s seed=%d threads=%d measure=%s b=%s [%s]", run_config.subcommand,
                    run_config.seed, run_config.threads,
                    None if run_config.measure is None else run_config.measure.model_dump_json(),
                    run_config.b, threading.current_thread().name)

    @staticmethod
    def log_end(duration, run_config: RunConfig, status: int):
        logger.info("RUN END: %s run=%s status=\"%d\" duration=\"%.3fs\"", run_config.subcommand, get_run_id(),
                    status, duration.total_seconds())
