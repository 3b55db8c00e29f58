import numpy as np
import pytest

from core.models import BetaMeasure, GaussianBump, LebesgueMeasure
from data.measure_repository import ShorthandMeasureRepository
from data.psi_repository import TabulatedPsiRepository
from data.rate_repository import CachedRateRepository
from service.diagnostics_service import DiagnosticsService
from service.limit_service import LimitService
from service.measure_service import MeasureService
from service.rate_service import RateService
from service.simulation_service import SimulationService


@pytest.fixture(scope="session")
def rate_repository():
    return CachedRateRepository()


@pytest.fixture(scope="session")
def measure_service():
    return MeasureService(ShorthandMeasureRepository())


@pytest.fixture(scope="session")
def rate_service(rate_repository):
    return RateService(rate_repository)


@pytest.fixture(scope="session")
def limit_service():
    return LimitService(TabulatedPsiRepository())


@pytest.fixture(scope="session")
def simulation_service(rate_repository):
    return SimulationService(rate_repository, threads=1, batch_size=250)


@pytest.fixture(scope="session")
def diagnostics_service(rate_repository):
    return DiagnosticsService(rate_repository, threads=1)


@pytest.fixture
def uniform():
    return BetaMeasure(a=1.0, b=1.0)


@pytest.fixture
def lebesgue():
    return LebesgueMeasure()


@pytest.fixture
def bump():
    return GaussianBump(center=0.0, width=1.0)


@pytest.fixture(scope="session")
def bs_params(measure_service):
    return measure_service.assumption_a_params(BetaMeasure(a=1.0, b=1.0), 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
