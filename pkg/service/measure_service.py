# service/measure_service.py
import logging
from typing import Callable, Optional

import numpy as np

from core.exceptions import AssumptionViolatedError, DomainError, LambdaOUException, NumericalError
from core.models import LimitParams, MeasureSpec, SignedDust
from core.specfun import EULER_GAMMA, digamma
from data import ComputationContext, config
from data import measures
from data.measure_repository import MeasureRepositoryInterface

logger = logging.getLogger(__name__)


class MeasureServiceInterface:
    def load_measure(self, reference: str) -> MeasureSpec:
        """
        Resolves a measure reference given on the command line or in a config file.

        Args:
            reference (str): Shorthand (``beta:a,b``, ``lebesgue:c``, ``atom:u,mass``),
                inline JSON or ``@file.json``.

        Returns:
            MeasureSpec: The validated measure.

        Raises:
            DataValidationError: If the reference cannot be parsed or fails validation.
            MeasureNotFoundError: If a referenced file does not exist.
        """
        pass

    def total_mass(self, m: MeasureSpec) -> float:
        """
        Total mass Λ([0,1]).

        Raises:
            QuadratureError: If the mass of a density cannot be certified.
        """
        pass

    def integrate(self, f: Callable[[float], float], m: MeasureSpec, tol: Optional[float] = None) -> float:
        """
        Integrates a bounded function against the measure.

        Args:
            f (Callable): Integrand on [0,1].
            m (MeasureSpec): The measure.
            tol (float): Absolute tolerance; defaults to the configured quadrature tolerance.

        Returns:
            float: ∫ f dm with atoms summed exactly.

        Raises:
            QuadratureError: If the adaptive scheme cannot certify the tolerance.
            SingularityError: If the declared endpoint exponents make the integral infinite.
        """
        pass

    def dust_decompose(self, m: MeasureSpec, b: float) -> SignedDust:
        """
        Jordan decomposition of m - b·λ.

        Args:
            m (MeasureSpec): The measure.
            b (float): Coefficient of the Lebesgue part, b ≥ 0.

        Returns:
            SignedDust: The nonnegative parts, split at the sign changes of the density.

        Raises:
            UnsupportedRepresentationError: If the signed density cannot be evaluated pointwise.
        """
        pass

    def assumption_a_params(self, m: MeasureSpec, b: Optional[float] = None, tol: Optional[float] = None) -> LimitParams:
        """
        Checks that u^{-1}(m - bλ)^± are finite measures and computes the drift constant
        a = b(1 + Ψ(1)) - ∫u^{-1}(m - bλ)(du).

        Args:
            m (MeasureSpec): The measure.
            b (float): Lebesgue coefficient. May be omitted only for Beta(1,b).
            tol (float): Quadrature tolerance for a.

        Returns:
            LimitParams: b, a, the measure and the dust integral.

        Raises:
            AssumptionViolatedError: If either Jordan part has an infinite u^{-1} integral.
            DomainError: If b is omitted for a measure that does not determine it.
        """
        pass

    def levy_density(self, m: MeasureSpec, u):
        """
        Density of the Lévy measure (image of u^{-2}Λ(du) under u ↦ log(1-u)) at u < 0.

        Raises:
            DomainError: If u ≥ 0.
        """
        pass


class MeasureService(MeasureServiceInterface):
    def __init__(self, measure_repository: MeasureRepositoryInterface):
        self.measure_repository = measure_repository

    def load_measure(self, reference: str) -> MeasureSpec:
        return self.measure_repository.load_measure(reference)

    def total_mass(self, m: MeasureSpec) -> float:
        with ComputationContext("total_mass"):
            return measures.total_mass(m)

    def integrate(self, f: Callable[[float], float], m: MeasureSpec, tol: Optional[float] = None) -> float:
        with ComputationContext("integrate"):
            return measures.integrate(f, m, tol)

    def dust_decompose(self, m: MeasureSpec, b: float) -> SignedDust:
        with ComputationContext("dust_decompose"):
            return measures.dust_decompose(m, b)

    def assumption_a_params(self, m: MeasureSpec, b: Optional[float] = None, tol: Optional[float] = None) -> LimitParams:
        tol = config['quad_tol'] if tol is None else tol
        if b is None:
            b = self.measure_repository.default_b(m)
            if b is None:
                raise DomainError("b must be supplied for this measure; it is only implied for Beta(1,b).")
        with ComputationContext("assumption_a_params"):
            try:
                check_assumption_a(m, b)
                dust_integral = self._dust_integral(m, b, tol)
            except LambdaOUException as known_exc:
                raise known_exc
            except Exception as e:
                raise NumericalError("An unexpected error occurred while computing the drift constant.") from e
            a = b * (1.0 + digamma(1.0).real) - dust_integral
            logger.debug("assumption A b=%s a=%.12g dust_integral=%.12g", b, a, dust_integral)
            return LimitParams(b=b, a=a, measure=m, dust_integral=dust_integral, tolerance=tol)

    def levy_density(self, m: MeasureSpec, u):
        with ComputationContext("levy_density"):
            return measures.levy_density(m, u)

    @staticmethod
    def _dust_integral(m: MeasureSpec, b: float, tol: float) -> float:
        if measures.is_beta_family(m):
            return closed_dust_integral(m, b)
        dust = measures.dust_decompose(m, b)
        return measures.integrate_signed(lambda u: 1.0 / u, dust, tol, f_exponent_zero=-1.0)


def check_assumption_a(m: MeasureSpec, b: float):
    """Raises AssumptionViolatedError unless (density - b)/u is integrable at 0."""
    sign, r = measures.dust_behaviour_at_zero(m, b)
    if sign != 0 and r is not None and r <= 0.0:
        raise AssumptionViolatedError(
            f"u^-1 (Λ - {b}·λ) has infinite mass near 0: the density minus b behaves like u^{r:.3g}.")


def assumption_a_holds(m: MeasureSpec, b: float) -> bool:
    try:
        check_assumption_a(m, b)
    except AssumptionViolatedError:
        return False
    return True


def closed_dust_integral(m: MeasureSpec, b: float) -> float:
    """∫u^{-1}(m - bλ)(du) for beta-type components and atoms."""
    total = 0.0
    slope = 0.0
    for weight, alpha, beta in measures.beta_components(m):
        if alpha > 1.0:
            total += weight * (alpha + beta - 1.0) / (alpha - 1.0)
        elif alpha == 1.0:
            # ∫((1-u)^{β-1} - 1)/u du = Ψ(1) - Ψ(β)
            total += weight * beta * (-EULER_GAMMA - digamma(beta).real)
            slope += weight * beta
        else:
            raise AssumptionViolatedError(f"A Beta({alpha}, {beta}) component has no finite u^-1 integral.")
    if not np.isclose(slope, b, rtol=1e-12, atol=1e-15):
        raise AssumptionViolatedError(f"The density tends to {slope} at 0, not to b = {b}.")
    for location, mass in measures.atoms(m):
        total += mass / location
    return total
