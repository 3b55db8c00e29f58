# service/limit_service.py
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy.integrate import trapezoid
from scipy.special import polygamma

from core.exceptions import (DomainError, InconclusiveError, InversionError, LambdaOUException, NumericalError,
                             QuadratureError, StationarityUnavailableError, UnsupportedRepresentationError)
from core.models import (CDFInversion, CFGrid, CharExponent, EvaluationMethod, LimitParams, MeasureSpec, MixtureMeasure,
                         SmoothFunction)
from core.specfun import digamma, gamma_ratio, log_gamma
from data import ComputationContext, config, get_current_computation_context
from data import measures
from data.psi_repository import PsiRepositoryInterface, panel_rule
from data.rate_repository import lebesgue_scale

logger = logging.getLogger(__name__)

S_ORDER = 16
MAX_S_PANELS = 2 ** 11
INVERSION_ORDERS = (12, 20)
MAX_INVERSION_T = 4096.0
X_BLOCK = 256
GENERATOR_PATCH = 1e-3
STATIONARY_MARGIN = 15.0

CF = Callable[[np.ndarray], np.ndarray]


class LimitServiceInterface:
    def char_exponent(self, params: LimitParams, method: Optional[EvaluationMethod] = None) -> CharExponent:
        """
        Binds an evaluation method to the limit parameters.

        Args:
            params (LimitParams): Output of the Assumption-A check.
            method (str): ``quadrature`` (default), ``bs-closed`` or ``beta1b-closed``.

        Returns:
            CharExponent: The validated exponent.

        Raises:
            DataValidationError: If a closed form is requested for a measure it does not cover.
        """
        pass

    def psi(self, x, ce: CharExponent):
        """
        Characteristic exponent ψ(x) = iax + ∫(e^{ix log(1-u)} - 1 + ixu)u^{-2}Λ(du).

        Args:
            x (float | ndarray): Real argument(s).
            ce (CharExponent): Exponent and method.

        Returns:
            complex | ndarray: ψ(x).

        Raises:
            QuadratureError: If the quadrature error estimate exceeds the tolerance.
        """
        pass

    def phi_t(self, x, t: float, ce: CharExponent):
        """
        CF of the limit X_t started at 0, exp(∫_0^t ψ(e^{-bs}x) ds).

        Raises:
            DomainError: If t < 0.
            QuadratureError: If the time integral does not converge.
        """
        pass

    def chi_t(self, y, t: float, ce: CharExponent):
        """
        CF of the fixation-line limit Y_t started at 0, exp(∫_0^t ψ(-e^{bs}y) ds).

        Raises:
            DomainError: If t < 0.
        """
        pass

    def phi_stationary(self, x, ce: CharExponent):
        """
        CF of the stationary law, exp(∫_0^∞ ψ(e^{-bs}x) ds).

        Raises:
            StationarityUnavailableError: If b = 0 or the log-moment condition fails.
            InconclusiveError: If the exponent metadata cannot decide the log-moment condition.
        """
        pass

    def cdf_from_cf(self, cf: CF, x, tol: Optional[float] = None):
        """
        Distribution function from a characteristic function by Gil-Pelaez inversion.

        Args:
            cf (Callable): Vectorized CF.
            x (float | ndarray): Evaluation point(s).
            tol (float): Absolute tolerance on F.

        Returns:
            float | ndarray: F(x) in [0, 1].

        Raises:
            InversionError: If the CF does not decay or the two Gauss orders disagree.
        """
        pass

    def invert_cdf(self, cf: CF, x, tol: Optional[float] = None) -> CDFInversion:
        """
        Same inversion as ``cdf_from_cf``, returned with its error estimate (largest gap between
        the two Gauss orders over x) and the truncation point of the oscillatory integral.
        """
        pass

    def log_moment_check(self, m: MeasureSpec) -> bool:
        """
        Whether ∫ log log(1/(1-u)) Λ(du) is finite near u = 1, from the declared exponents.

        Raises:
            InconclusiveError: If the declared exponents cannot decide.
        """
        pass

    def generator_limit(self, f: SmoothFunction, x: float, ce: CharExponent, side: str = "block") -> float:
        """
        Generator of the limit process applied to a test function.

        Args:
            f (SmoothFunction): Test function with analytic derivatives.
            x (float): Evaluation point.
            ce (CharExponent): Limit exponent.
            side (str): ``block`` for X, ``fixation`` for Y.

        Returns:
            float: Af(x).
        """
        pass

    def levy_measure_t(self, ce: CharExponent, t: float, c: float, d: float) -> float:
        """
        Mass of ϱ_t(A) = ∫∫_0^t 1_A(e^{-bs}u) ds ϱ(du) on A = [c, d] ⊂ (-∞, 0).

        Raises:
            DomainError: If not c < d < 0 or t ≤ 0.
        """
        pass

    def cf_grid(self, ce: CharExponent, kind: str, t: float, x_grid) -> CFGrid:
        """
        Tabulates φ_t, χ_t or the stationary CF on a grid.
        """
        pass

    def cf_function(self, ce: CharExponent, kind: str, t: float = 0.0) -> CF:
        """
        The CF of X_t, Y_t or the stationary law as a vectorized callable.
        """
        pass

    def sample_limit_law(self, cf: CF, size: int, seed: int) -> np.ndarray:
        """
        Draws from the law with the given CF by inverse transform on an inverted CDF grid.
        """
        pass

    def law_moments(self, cf: CF) -> Tuple[float, float]:
        """
        Mean and variance of the law with the given CF, from its inverted CDF.
        """
        pass

    def ou_compound_sample(self, ce: CharExponent, t: float, size: int, seed: int,
                           epsilon: float = 1e-2) -> np.ndarray:
        """
        X_t = ∫_0^t e^{-b(t-s)} dL_s with the jumps of size below ε replaced by
        their drift and a Gaussian of matching variance. Scaled Lebesgue measures only.

        Raises:
            UnsupportedRepresentationError: For other measures.
        """
        pass


# Closed forms

def psi_bs(x, c: float):
    """ψ for Λ = c·λ, b = c."""
    x = np.asarray(x, dtype=float)
    return c * 1j * x * np.asarray(digamma(1.0 + 1j * x))


def psi_beta1b(x, b: float):
    """ψ for Λ = Beta(1, b)."""
    x = np.asarray(x, dtype=float)
    return b * ((1.0 - b) * digamma(b).real - (1.0 - b - 1j * x) * np.asarray(digamma(b + 1j * x)))


def _beta1b_log_integral(lo: float, hi: float, b: float) -> complex:
    """∫_lo^hi (Ψ(b) - Ψ(b+iu))/u du."""
    psi_b = digamma(b).real

    def integrand(u):
        if u == 0.0:
            return -1j * float(polygamma(1, b))
        return (psi_b - digamma(b + 1j * u)) / u

    real, _ = sp_integrate.quad(lambda u: integrand(u).real, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)
    imag, _ = sp_integrate.quad(lambda u: integrand(u).imag, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return complex(real, imag)


def phi_t_closed(x: float, t: float, ce: CharExponent) -> complex:
    b = ce.params.b
    shrunk = np.exp(-b * t) * x
    if ce.method == "bs-closed":
        return complex(gamma_ratio(1.0 + 1j * x, 1.0 + 1j * shrunk))
    if ce.method == "beta1b-closed":
        log_value = (1.0 - b) * _beta1b_log_integral(shrunk, x, b) + log_gamma(b + 1j * x) - log_gamma(b + 1j * shrunk)
        return complex(np.exp(log_value))
    raise UnsupportedRepresentationError("No closed form for this exponent.")


def phi_stationary_closed(x: float, ce: CharExponent) -> complex:
    b = ce.params.b
    if ce.method == "bs-closed":
        return complex(np.exp(log_gamma(1.0 + 1j * x)))
    if ce.method == "beta1b-closed":
        log_value = (1.0 - b) * _beta1b_log_integral(0.0, x, b) + log_gamma(b + 1j * x) - log_gamma(b)
        return complex(np.exp(log_value))
    raise UnsupportedRepresentationError("No closed form for this exponent.")


def closed_method_for(params: LimitParams) -> Optional[EvaluationMethod]:
    """The closed form that covers these parameters, if any."""
    scale = lebesgue_scale(params.measure)
    if scale is not None and np.isclose(scale, params.b, rtol=1e-12):
        return "bs-closed"
    m = params.measure
    if m.kind == "beta" and m.a == 1.0 and np.isclose(m.b, params.b, rtol=1e-12):
        return "beta1b-closed"
    return None


def _scalar_or_array(x, values):
    return complex(values.ravel()[0]) if np.ndim(x) == 0 else values


def _finite_log_moment(q: Optional[float], r: Optional[float], s: Optional[float]) -> bool:
    if q is None or q > -1.0:
        return True
    if q < -1.0:
        return False
    if r is None:
        raise InconclusiveError("Density ~ (1-u)^-1 near 1 without a declared logarithmic exponent.")
    if r < -1.0:
        return True
    if r > -1.0:
        return False
    if s is None:
        raise InconclusiveError("Density ~ ((1-u) log(1/(1-u)))^-1 near 1 without a declared log-log exponent.")
    return s + 1.0 < -1.0


class LimitService(LimitServiceInterface):
    def __init__(self, psi_repository: PsiRepositoryInterface):
        self.psi_repository = psi_repository

    def char_exponent(self, params: LimitParams, method: Optional[EvaluationMethod] = None) -> CharExponent:
        return CharExponent(params=params, method=method or "quadrature")

    # ψ and the time integrals

    def _psi_values(self, x: np.ndarray, ce: CharExponent, tabulated: bool) -> np.ndarray:
        if ce.method == "bs-closed":
            return psi_bs(x, ce.params.b)
        if ce.method == "beta1b-closed":
            return psi_beta1b(x, ce.params.b)
        if tabulated:
            return self.psi_repository.psi_table(x, ce.params)
        return self.psi_repository.psi(x, ce.params)

    def psi(self, x, ce: CharExponent):
        with ComputationContext("psi"):
            values = self._psi_values(np.atleast_1d(np.asarray(x, dtype=float)), ce, tabulated=False)
            values = np.where(np.atleast_1d(x) == 0.0, 0.0, values)
            return _scalar_or_array(x, values)

    def _time_integral(self, x: np.ndarray, t: float, ce: CharExponent, direction: int) -> np.ndarray:
        """∫_0^t ψ(e^{direction·b·s}·sign·x) ds with sign = -1 for the expanding direction."""
        b = ce.params.b
        if b == 0.0 or t == 0.0:
            argument = x if direction < 0 else -x
            return t * self._psi_values(argument, ce, tabulated=True)
        panels = max(1, int(np.ceil(b * t / 0.5)))
        previous = None
        while panels <= MAX_S_PANELS:
            s, weights = panel_rule(np.linspace(0.0, t, panels + 1), S_ORDER)
            if direction < 0:
                arguments = np.outer(x, np.exp(-b * s))
            else:
                arguments = -np.outer(x, np.exp(b * s))
            values = self._psi_values(arguments.ravel(), ce, tabulated=True).reshape(arguments.shape) @ weights
            if previous is not None and np.max(np.abs(values - previous)) <= config['cf_tol']:
                return values
            previous = values
            panels *= 2
        raise QuadratureError(f"Time integral over [0, {t}] did not settle within {MAX_S_PANELS} panels.")

    def _cf_values(self, x, t: float, ce: CharExponent, direction: int) -> np.ndarray:
        if t < 0.0:
            raise DomainError("t must be nonnegative.")
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        values = np.ones(x_arr.shape, dtype=complex)
        active = x_arr != 0.0
        if t == 0.0 or not np.any(active):
            return values
        if ce.method != "quadrature":
            argument = x_arr[active] if direction < 0 else -np.exp(ce.params.b * t) * x_arr[active]
            values[active] = [phi_t_closed(float(v), t, ce) for v in argument]
            return values
        values[active] = np.exp(self._time_integral(x_arr[active], t, ce, direction))
        return values

    def phi_t(self, x, t: float, ce: CharExponent):
        with ComputationContext("phi_t"):
            return _scalar_or_array(x, self._cf_values(x, t, ce, -1))

    def chi_t(self, y, t: float, ce: CharExponent):
        with ComputationContext("chi_t"):
            return _scalar_or_array(y, self._cf_values(y, t, ce, 1))

    def _stationary_values(self, x, ce: CharExponent) -> np.ndarray:
        b = ce.params.b
        if b <= 0.0:
            raise StationarityUnavailableError("b = 0: the limit has no stationary law.")
        if not self.log_moment_check(ce.params.measure):
            raise StationarityUnavailableError("The log-moment condition fails; no stationary law.")
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        values = np.ones(x_arr.shape, dtype=complex)
        active = x_arr != 0.0
        if not np.any(active):
            return values
        if ce.method != "quadrature":
            values[active] = [phi_stationary_closed(float(v), ce) for v in x_arr[active]]
            return values
        xs = x_arr[active]
        horizon = (np.log1p(np.max(np.abs(xs))) + STATIONARY_MARGIN) / b
        body = self._time_integral(xs, horizon, ce, -1)
        # beyond the horizon ψ(v) = iav + O(v²)
        tail = 1j * ce.params.a * xs * np.exp(-b * horizon) / b
        values[active] = np.exp(body + tail)
        return values

    def phi_stationary(self, x, ce: CharExponent):
        with ComputationContext("phi_stationary"):
            return _scalar_or_array(x, self._stationary_values(x, ce))

    def phi_t_reference(self, x: float, t: float, ce: CharExponent) -> complex:
        method = closed_method_for(ce.params)
        if method is None:
            raise UnsupportedRepresentationError("Closed forms exist for c·λ with b = c and Beta(1, b) only.")
        return phi_t_closed(x, t, ce.model_copy(update={"method": method}))

    def phi_stationary_reference(self, x: float, ce: CharExponent) -> complex:
        method = closed_method_for(ce.params)
        if method is None:
            raise UnsupportedRepresentationError("Closed forms exist for c·λ with b = c and Beta(1, b) only.")
        return phi_stationary_closed(x, ce.model_copy(update={"method": method}))

    # CF tables and inversion

    def cf_function(self, ce: CharExponent, kind: str, t: float = 0.0) -> CF:
        if kind == "X":
            return lambda x: self._cf_values(x, t, ce, -1)
        if kind == "Y":
            return lambda y: self._cf_values(y, t, ce, 1)
        if kind == "stationary":
            return lambda x: self._stationary_values(x, ce)
        raise DomainError(f"Unknown CF kind '{kind}'.")

    def cf_grid(self, ce: CharExponent, kind: str, t: float, x_grid) -> CFGrid:
        with ComputationContext("cf_grid"):
            grid = np.asarray(x_grid, dtype=float)
            values = self.cf_function(ce, kind, t)(grid)
            return CFGrid(x_grid=grid.tolist(), re=values.real.tolist(), im=values.imag.tolist(), t=t, kind=kind)

    @staticmethod
    def _truncation_point(cf: CF, tol: float) -> float:
        horizon = 4.0
        while horizon <= MAX_INVERSION_T:
            window = np.linspace(horizon, 2.0 * horizon, 16)
            if np.max(np.abs(cf(window))) <= tol:
                return 2.0 * horizon
            horizon *= 2.0
        raise InversionError(f"|cf| stays above {tol:.3g} up to {MAX_INVERSION_T}.")

    def _invert(self, cf: CF, x: np.ndarray, tol: float) -> Tuple[np.ndarray, float, float]:
        """(F(x), error estimate, truncation point); the estimate is the gap between the two Gauss orders."""
        horizon = self._truncation_point(cf, tol)
        width = min(0.25, 1.0 / max(1.0, float(np.max(np.abs(x)))))
        for _ in range(4):
            edges = np.arange(0.0, horizon + width, width)
            estimates = []
            for order in INVERSION_ORDERS:
                t, weights = panel_rule(edges, order)
                phi = cf(t)
                weighted = weights / t
                integral = np.empty(x.shape)
                for start in range(0, x.size, X_BLOCK):
                    block = x[start:start + X_BLOCK, None] * t
                    # Im(e^{-itx} φ(t))
                    integral[start:start + X_BLOCK] = (np.cos(block) * phi.imag - np.sin(block) * phi.real) @ weighted
                estimates.append(0.5 - integral / np.pi)
            error = float(np.max(np.abs(estimates[1] - estimates[0])))
            if error <= tol:
                context = get_current_computation_context()
                if context is not None:
                    context.record_quadrature(error)
                return np.clip(estimates[1], 0.0, 1.0), error, horizon
            width /= 2.0
        raise InversionError(f"Gil-Pelaez quadrature error {error:.3g} exceeds {tol:.3g}.")

    def cdf_from_cf(self, cf: CF, x, tol: Optional[float] = None):
        tol = config['inversion_tol'] if tol is None else tol
        with ComputationContext("cdf_from_cf"):
            x_arr = np.atleast_1d(np.asarray(x, dtype=float))
            values, _, _ = self._invert(cf, x_arr, tol)
            return float(values[0]) if np.ndim(x) == 0 else values

    def invert_cdf(self, cf: CF, x, tol: Optional[float] = None) -> CDFInversion:
        tol = config['inversion_tol'] if tol is None else tol
        with ComputationContext("invert_cdf"):
            x_arr = np.atleast_1d(np.asarray(x, dtype=float))
            values, error, horizon = self._invert(cf, x_arr, tol)
            return CDFInversion(x=x_arr.tolist(), cdf=values.tolist(), error_estimate=error,
                                truncation_point=horizon, tol=tol)

    def _support(self, cf: CF, level: float, tol: float) -> Tuple[float, float]:
        lo, hi = -4.0, 4.0
        for _ in range(12):
            ends, _, _ = self._invert(cf, np.array([lo, hi]), tol)
            if ends[0] <= level and ends[1] >= 1.0 - level:
                return lo, hi
            if ends[0] > level:
                lo *= 2.0
            if ends[1] < 1.0 - level:
                hi *= 2.0
        raise InversionError("Could not bracket the bulk of the law.")

    def _cdf_grid(self, cf: CF, level: float, spacing: float, tol: float) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self._support(cf, level, tol)
        grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / spacing)) + 1)
        values, error, _ = self._invert(cf, grid, tol)
        logger.debug("cdf grid [%.3g, %.3g] points=%d inversion_error=%.3g", lo, hi, grid.size, error)
        return grid, np.maximum.accumulate(values)

    def sample_limit_law(self, cf: CF, size: int, seed: int) -> np.ndarray:
        with ComputationContext("sample_limit_law"):
            grid, values = self._cdf_grid(cf, 1e-9, 0.01, config['inversion_tol'])
            uniforms = np.random.Generator(np.random.Philox(seed)).random(size)
            return np.interp(uniforms, values, grid)

    def law_moments(self, cf: CF) -> Tuple[float, float]:
        with ComputationContext("law_moments"):
            grid, values = self._cdf_grid(cf, 1e-12, 0.01, config['inversion_tol'])
            hi = grid[-1]
            mean = hi - trapezoid(values, grid)
            second = hi * hi - trapezoid(2.0 * grid * values, grid)
            return float(mean), float(second - mean * mean)

    # Measure-level properties

    def log_moment_check(self, m: MeasureSpec) -> bool:
        if isinstance(m, MixtureMeasure):
            return all(self.log_moment_check(component) for component in m.components)
        if m.kind == "density":
            return _finite_log_moment(m.exponent_one, m.log_exponent_one, m.loglog_exponent_one)
        return _finite_log_moment(measures.exponent_at_one(m), None, None)

    def generator_limit(self, f: SmoothFunction, x: float, ce: CharExponent, side: str = "block") -> float:
        with ComputationContext("generator_limit"):
            try:
                params = ce.params
                f0, f1, f2, f3 = (float(g(x)) for g in (f.value, f.d1, f.d2, f.d3))
                if side == "block":
                    drift = f1 * (params.a - params.b * x)
                    head = ((f2 - f1) / 2.0, -f1 / 3.0 + f2 / 2.0 - f3 / 6.0)
                    sign = 1.0
                elif side == "fixation":
                    drift = f1 * (-params.a + params.b * x)
                    head = ((f1 + f2) / 2.0, f1 / 3.0 + f2 / 2.0 + f3 / 6.0)
                    sign = -1.0
                else:
                    raise DomainError(f"Unknown side '{side}'.")

                def integrand(u):
                    if u < GENERATOR_PATCH:
                        return head[0] + u * head[1]
                    with np.errstate(divide="ignore"):
                        jump = sign * np.log1p(-u)
                    return (float(f.value(x + jump)) - f0 + sign * u * f1) / (u * u)

                return drift + measures.integrate(integrand, params.measure)
            except LambdaOUException as known_exc:
                raise known_exc
            except Exception as e:
                raise NumericalError("An unexpected error occurred while applying the limit generator.") from e

    def _levy_mass(self, m: MeasureSpec, lo: float, hi: float) -> float:
        """ϱ([lo, hi]) for lo < hi < 0."""
        value, error = sp_integrate.quad(lambda u: float(measures.levy_density(m, u)), lo, hi,
                                         epsabs=1e-12, epsrel=1e-11, limit=config['quad_limit'])
        for location, mass in measures.atoms(m):
            if lo <= np.log1p(-location) <= hi:
                value += mass / location ** 2
        return value

    def levy_measure_t(self, ce: CharExponent, t: float, c: float, d: float) -> float:
        if not c < d < 0.0:
            raise DomainError("The interval must satisfy c < d < 0.")
        if t <= 0.0:
            raise DomainError("t must be positive.")
        with ComputationContext("levy_measure_t"):
            m, b = ce.params.measure, ce.params.b
            if b == 0.0:
                return t * self._levy_mass(m, c, d)
            value, error = sp_integrate.quad(lambda s: self._levy_mass(m, c * np.exp(b * s), d * np.exp(b * s)),
                                             0.0, t, epsabs=1e-10, epsrel=1e-10, limit=config['quad_limit'])
            return measures.certify(value, error, 1e-8, False, "levy_measure_t")

    def ou_compound_sample(self, ce: CharExponent, t: float, size: int, seed: int,
                           epsilon: float = 1e-2) -> np.ndarray:
        scale = lebesgue_scale(ce.params.measure)
        if scale is None:
            raise UnsupportedRepresentationError("The compound-Poisson construction covers scaled Lebesgue measures.")
        with ComputationContext("ou_compound_sample"):
            a, b = ce.params.a, ce.params.b
            rng = np.random.Generator(np.random.Philox(seed))
            small_drift, _ = sp_integrate.quad(lambda u: (np.log1p(-u) + u) / (u * u), 0.0, epsilon, epsabs=1e-14)
            small_var, _ = sp_integrate.quad(lambda u: (np.log1p(-u) / u) ** 2, 0.0, epsilon, epsabs=1e-14)
            drift = a - scale * np.log(epsilon) + scale * small_drift
            variance = scale * small_var
            if b > 0.0:
                mean = drift * -np.expm1(-b * t) / b
                spread = variance * -np.expm1(-2.0 * b * t) / (2.0 * b)
            else:
                mean, spread = drift * t, variance * t
            samples = mean + np.sqrt(spread) * rng.standard_normal(size)
            counts = rng.poisson(scale * (1.0 / epsilon - 1.0) * t, size)
            total = int(counts.sum())
            times = rng.uniform(0.0, t, total)
            inverse = 1.0 / epsilon - rng.random(total) * (1.0 / epsilon - 1.0)
            jumps = np.log1p(-1.0 / inverse) * np.exp(-b * (t - times))
            owner = np.repeat(np.arange(size), counts)
            return samples + np.bincount(owner, weights=jumps, minlength=size)
