import logging
import os
import threading
import warnings

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError
from scipy.integrate import IntegrationWarning

from core.exceptions import DataValidationError, LambdaOUException, NumericalError

load_dotenv()


# Numerical configuration
config = {
    'threads': int(os.getenv('LAMBDA_OU_THREADS', '1')),
    'log_level': os.getenv('LAMBDA_OU_LOG_LEVEL', 'WARNING'),
    'quad_tol': float(os.getenv('LAMBDA_OU_QUAD_TOL', '1e-10')),
    'cf_tol': float(os.getenv('LAMBDA_OU_CF_TOL', '1e-9')),
    'tail_tol': float(os.getenv('LAMBDA_OU_TAIL_TOL', '1e-10')),
    'cache_size': int(os.getenv('LAMBDA_OU_CACHE_SIZE', '4096')),
    'batch_size': int(os.getenv('LAMBDA_OU_BATCH_SIZE', '500')),
    'cap': int(os.getenv('LAMBDA_OU_CAP', str(10 ** 9))),
    'inversion_tol': float(os.getenv('LAMBDA_OU_INVERSION_TOL', '1e-8')),
    'quad_limit': int(os.getenv('LAMBDA_OU_QUAD_LIMIT', '200')),
}

logger = logging.getLogger(__name__)

# Process-wide, installed once at import; QUADPACK accuracy is checked by certify()
warnings.filterwarnings("ignore", category=IntegrationWarning)

# Create a thread-local storage
local_storage = threading.local()


class ComputationContext:
    """Scope of one service operation.

    Collects quadrature bookkeeping from the data layer, keeps floating point
    errors quiet through the thread-local numpy error state and maps unexpected
    failures to ``NumericalError``. Warning filters are never touched per context.
    Contexts nest; the innermost one is current.
    """

    def __init__(self, operation: str):
        self.operation = operation
        self.quadrature_calls = 0
        self.max_error_estimate = 0.0
        self._errstate = None

    def __enter__(self):
        self._errstate = np.errstate(divide='ignore', invalid='ignore', over='ignore', under='ignore')
        self._errstate.__enter__()
        stack = getattr(local_storage, 'computation_stack', None)
        if stack is None:
            stack = local_storage.computation_stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        try:
            self._errstate.__exit__(None, None, None)
        finally:
            local_storage.computation_stack.pop()
        if exc_type is None:
            logger.debug("op=%s quad_calls=%d max_err=%.3g", self.operation, self.quadrature_calls,
                          self.max_error_estimate)
            return False
        if not issubclass(exc_type, Exception):
            return False
        if issubclass(exc_type, LambdaOUException):
            logger.debug("op=%s failed: %s", self.operation, exc_val, exc_info=(exc_type, exc_val, exc_tb))
            return False
        if issubclass(exc_type, ValidationError):
            raise DataValidationError(str(exc_val)) from exc_val
        logger.debug("op=%s unexpected failure", self.operation, exc_info=(exc_type, exc_val, exc_tb))
        raise NumericalError(f"An unexpected numerical failure occurred in {self.operation}.") from exc_val

    def record_quadrature(self, error_estimate: float):
        self.quadrature_calls += 1
        self.max_error_estimate = max(self.max_error_estimate, float(error_estimate))


# Provide a global function to fetch the current context
def get_current_computation_context():
    stack = getattr(local_storage, 'computation_stack', None)
    return stack[-1] if stack else None
