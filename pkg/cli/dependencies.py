import functools
from typing import Optional

from data import config
from data.measure_repository import MeasureRepositoryInterface, ShorthandMeasureRepository
from data.psi_repository import PsiRepositoryInterface, TabulatedPsiRepository
from data.rate_repository import CachedRateRepository, RateRepositoryInterface
from service.diagnostics_service import DiagnosticsService, DiagnosticsServiceInterface
from service.limit_service import LimitService, LimitServiceInterface
from service.measure_service import MeasureService, MeasureServiceInterface
from service.rate_service import RateService, RateServiceInterface
from service.simulation_service import SimulationService, SimulationServiceInterface


def get_measure_repository() -> MeasureRepositoryInterface:
    return ShorthandMeasureRepository()


# One rate cache and one ψ table cache per process, shared by every service
@functools.lru_cache(maxsize=None)
def get_rate_repository() -> RateRepositoryInterface:
    return CachedRateRepository()


@functools.lru_cache(maxsize=None)
def get_psi_repository() -> PsiRepositoryInterface:
    return TabulatedPsiRepository()


def get_measure_service(repo: Optional[MeasureRepositoryInterface] = None) -> MeasureServiceInterface:
    return MeasureService(repo or get_measure_repository())


def get_rate_service(repo: Optional[RateRepositoryInterface] = None) -> RateServiceInterface:
    return RateService(repo or get_rate_repository())


def get_limit_service(repo: Optional[PsiRepositoryInterface] = None) -> LimitServiceInterface:
    return LimitService(repo or get_psi_repository())


def get_simulation_service(repo: Optional[RateRepositoryInterface] = None, threads: Optional[int] = None,
                           batch_size: Optional[int] = None) -> SimulationServiceInterface:
    return SimulationService(repo or get_rate_repository(), threads=threads or config['threads'],
                             batch_size=batch_size)


def get_diagnostics_service(repo: Optional[RateRepositoryInterface] = None,
                            threads: Optional[int] = None) -> DiagnosticsServiceInterface:
    return DiagnosticsService(repo or get_rate_repository(), threads=threads or config['threads'])
