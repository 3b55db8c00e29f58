import logging
import threading

from data import config

logging_format = ("%(asctime)s,%(msecs)d %(levelname)s tc=\"%(run_id)s\" [%(thread)d] [%(filename)s:%(lineno)d] %("
                  "message)s")

logging.basicConfig(level=config['log_level'].upper(), format=logging_format)

logger = logging.getLogger(__name__)


def set_run_id(run_id: str):
    """Set the run id stamped on every log record of this thread."""
    threading.current_thread().run_id = run_id


def get_run_id():
    """Get the run id of this thread."""
    return getattr(threading.current_thread(), "run_id", "UNKNOWN")


class RunIdFilter(logging.Filter):
    def filter(self, record):
        record.run_id = get_run_id()
        return True


# On the handlers, so records from every module get a run id
for _handler in logging.getLogger().handlers:
    _handler.addFilter(RunIdFilter())
