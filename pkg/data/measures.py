"""Pointwise densities, atoms and integration against driving measures.

Every integral of the form ∫ f(u) Λ(du) in the package goes through
``integrate``: the absolutely continuous part by QUADPACK (algebraic
endpoint weights where the endpoint exponents are known), atoms exactly.
"""
import functools
import logging
import threading
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from core.densities import DENSITY_REGISTRY
from core.exceptions import DomainError, QuadratureError, SingularityError, UnsupportedRepresentationError
from core.models import (AtomMeasure, BetaMeasure, DensityMeasure, JordanPart, LebesgueMeasure, MixtureMeasure,
                         SignedDust)
from data import config, get_current_computation_context

logger = logging.getLogger(__name__)

MeasureLike = Union[BetaMeasure, LebesgueMeasure, AtomMeasure, DensityMeasure, MixtureMeasure, JordanPart]

SPLIT_POINT = 0.5


def measure_key(m: MeasureLike) -> str:
    return m.model_dump_json()


def _uv(u, v=None) -> Tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    v = 1.0 - u if v is None else np.asarray(v, dtype=float)
    return u, v


# Pointwise densities of the absolutely continuous part

@functools.singledispatch
def density(m, u, v=None) -> np.ndarray:
    raise UnsupportedRepresentationError(f"No pointwise density for {type(m).__name__}.")


@density.register
def _(m: BetaMeasure, u, v=None):
    u, v = _uv(u, v)
    return np.exp(special.xlogy(m.a - 1.0, u) + special.xlogy(m.b - 1.0, v) - special.betaln(m.a, m.b))


@density.register
def _(m: LebesgueMeasure, u, v=None):
    u, _ = _uv(u, v)
    return np.full(u.shape, m.c)


@density.register
def _(m: AtomMeasure, u, v=None):
    u, _ = _uv(u, v)
    return np.zeros(u.shape)


@density.register
def _(m: DensityMeasure, u, v=None):
    u, v = _uv(u, v)
    return DENSITY_REGISTRY[m.name].evaluate(u, v, m.params)


@density.register
def _(m: MixtureMeasure, u, v=None):
    u, v = _uv(u, v)
    return sum(density(component, u, v) for component in m.components)


@density.register
def _(m: JordanPart, u, v=None):
    u, v = _uv(u, v)
    return np.maximum(m.sign * (density(m.source, u, v) - m.b), 0.0)


def signed_dust_density(m: MeasureLike, b: float, u, v=None) -> np.ndarray:
    """Density of m - b·λ."""
    return density(m, u, v) - b


# Atoms

def atoms(m: MeasureLike) -> List[Tuple[float, float]]:
    if isinstance(m, AtomMeasure):
        return [(m.location, m.mass)]
    if isinstance(m, MixtureMeasure):
        return [atom for component in m.components for atom in atoms(component)]
    if isinstance(m, JordanPart):
        return atoms(m.source) if m.sign == 1 else []
    return []


# Endpoint behaviour

def exponent_at_zero(m: MeasureLike) -> Optional[float]:
    """p with density ~ u^p near 0; None when the density vanishes near 0."""
    if isinstance(m, BetaMeasure):
        return m.a - 1.0
    if isinstance(m, LebesgueMeasure):
        return 0.0
    if isinstance(m, DensityMeasure):
        return m.exponent_zero
    if isinstance(m, MixtureMeasure):
        found = [p for p in (exponent_at_zero(c) for c in m.components) if p is not None]
        return min(found) if found else None
    if isinstance(m, JordanPart):
        sign, p = dust_behaviour_at_zero(m.source, m.b)
        return p if sign in (0, m.sign) else None
    return None


def exponent_at_one(m: MeasureLike) -> Optional[float]:
    """q with density ~ (1-u)^q near 1; None when the density vanishes near 1."""
    if isinstance(m, BetaMeasure):
        return m.b - 1.0
    if isinstance(m, LebesgueMeasure):
        return 0.0
    if isinstance(m, DensityMeasure):
        return m.exponent_one
    if isinstance(m, MixtureMeasure):
        found = [q for q in (exponent_at_one(c) for c in m.components) if q is not None]
        return min(found) if found else None
    if isinstance(m, JordanPart):
        sign, q = dust_behaviour_at_one(m.source, m.b)
        return q if sign in (0, m.sign) else None
    return None


def breakpoints(m: MeasureLike) -> Tuple[float, ...]:
    if isinstance(m, DensityMeasure):
        return tuple(DENSITY_REGISTRY[m.name].breakpoints(m.params))
    if isinstance(m, MixtureMeasure):
        return tuple(sorted({p for c in m.components for p in breakpoints(c)}))
    if isinstance(m, JordanPart):
        return tuple(sorted(set(m.breakpoints) | set(breakpoints(m.source))))
    return ()


SLOPE_POINTS = np.array([1e-3, 1e-5, 1e-7])


def _snap(exponent: float) -> float:
    nearest = round(exponent)
    return float(nearest) if abs(exponent - nearest) < 0.02 else float(exponent)


def dust_behaviour_at_zero(m: MeasureLike, b: float) -> Tuple[int, Optional[float]]:
    """(sign, r) with density(m) - b ≈ sign·C·u^r near 0.

    sign is 0 with r None when the difference vanishes near 0. For a
    density tending to b the order r is estimated from the density at
    1e-3, 1e-5 and 1e-7.
    """
    p = exponent_at_zero(m)
    if b == 0.0:
        return (1, p) if p is not None else (0, None)
    if p is None or p > 0.0:
        return -1, 0.0
    if p < 0.0:
        return 1, p
    d = signed_dust_density(m, b, SLOPE_POINTS)
    floor = 1e-13 * (1.0 + b)
    if np.all(np.abs(d) <= floor):
        return 0, None
    lo, hi = (1, 2) if abs(d[2]) > floor else (0, 1)
    r = np.log(abs(d[lo]) / abs(d[hi])) / np.log(SLOPE_POINTS[lo] / SLOPE_POINTS[hi])
    return int(np.sign(d[hi])), _snap(r)


def dust_behaviour_at_one(m: MeasureLike, b: float) -> Tuple[int, Optional[float]]:
    """(sign, q) of density(m) - b near 1, as ``dust_behaviour_at_zero``."""
    q = exponent_at_one(m)
    if q is None:
        return (-1, 0.0) if b > 0.0 else (0, None)
    if q < 0.0 or b == 0.0:
        return 1, q
    if q > 0.0:
        return -1, 0.0
    return 0, 0.0


# Integration

def certify(value: float, error: float, tol: float, relative: bool, where: str) -> float:
    bound = tol * abs(value) if relative else tol
    context = get_current_computation_context()
    if context is not None:
        context.record_quadrature(error)
    if not np.isfinite(value) or error > 10.0 * bound + 1e-15 * abs(value):
        raise QuadratureError(f"Quadrature on {where} reached error {error:.3g}, requested {bound:.3g}.")
    return value


ENDPOINT_FLOOR = 1e-250


def _endpoint_gap(exponent: float) -> float:
    if exponent == 0.0:
        return 1e-15
    return max(1e-15, ENDPOINT_FLOOR ** (1.0 / abs(exponent)))


def off_endpoints(u: float, lo: float, hi: float, alpha: float, beta: float) -> float:
    """u moved into (lo, hi) far enough for (u-lo)^alpha and (hi-u)^beta to be finite and nonzero.

    QAWS samples the integrand at both interval ends, where the stripped
    integrand is only defined as a limit; the moved point stands in for it.
    """
    u = max(u, lo + _endpoint_gap(alpha))
    return min(u, hi - _endpoint_gap(beta))


def quad_segment(g: Callable[[float], float], lo: float, hi: float, tol: float, relative: bool,
                 alpha: float = 0.0, beta: float = 0.0, points: Sequence[float] = ()) -> float:
    """∫_lo^hi g(u) (u-lo)^alpha (hi-u)^beta du."""
    if hi <= lo:
        return 0.0
    epsabs, epsrel = (0.0, tol) if relative else (tol, 1e-13)
    limit = config['quad_limit']
    if alpha <= -1.0 or beta <= -1.0:
        raise SingularityError(f"Endpoint exponents ({alpha}, {beta}) are not integrable.")
    if alpha == 0.0 and beta == 0.0:
        inner = [p for p in points if lo < p < hi]
        value, error = sp_integrate.quad(g, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit,
                                         points=inner or None)
    else:
        value, error = sp_integrate.quad(g, lo, hi, weight='alg', wvar=(alpha, beta), epsabs=epsabs,
                                         epsrel=epsrel, limit=limit)
    return certify(value, error, tol, relative, f"[{lo:.3g}, {hi:.3g}]")


def _segments(m: MeasureLike, extra: Sequence[float] = ()) -> List[float]:
    cuts = {0.0, SPLIT_POINT, 1.0} | {p for p in breakpoints(m) if 0.0 < p < 1.0} | {p for p in extra if 0.0 < p < 1.0}
    return sorted(cuts)


def _integrate_density(f, m: MeasureLike, tol: float, f_exponent_zero: float, f_exponent_one: float,
                       relative: bool) -> float:
    p, q = exponent_at_zero(m), exponent_at_one(m)
    alpha = 0.0 if p is None else p + f_exponent_zero
    beta = 0.0 if q is None else q + f_exponent_one
    cuts = _segments(m)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        a_lo = alpha if lo == 0.0 else 0.0
        b_hi = beta if hi == 1.0 else 0.0
        if hi == 1.0 and q is not None and q <= -1.0:
            total += _integrate_log_tail(f, m, lo, tol, relative)
            continue

        def g(u, lo=lo, hi=hi, a_lo=a_lo, b_hi=b_hi):
            u = off_endpoints(u, lo, hi, a_lo, b_hi)
            value = f(u) * float(density(m, u))
            if a_lo != 0.0:
                value /= u ** a_lo
            if b_hi != 0.0:
                value /= (1.0 - u) ** b_hi
            return value

        total += quad_segment(g, lo, hi, tol, relative, alpha=a_lo, beta=b_hi)
    return total


def _integrate_log_tail(f, m: MeasureLike, lo: float, tol: float, relative: bool) -> float:
    """Tail [lo, 1) of a density ~ (1-u)^{-1}·(log terms), in z = log(-log(1-u))."""
    if not isinstance(m, DensityMeasure) or DENSITY_REGISTRY[m.name].w_density is None:
        raise UnsupportedRepresentationError("A (1-u)^-1 endpoint needs a density given in w = -log(1-u).")
    w_density = DENSITY_REGISTRY[m.name].w_density

    def g(z):
        w = np.exp(z)
        return f(-np.expm1(-w)) * float(w_density(w, m.params)) * w

    z_lo = np.log(-np.log1p(-lo))
    epsabs, epsrel = (0.0, tol) if relative else (tol, 1e-13)
    value, error = sp_integrate.quad(g, z_lo, np.inf, epsabs=epsabs, epsrel=epsrel, limit=config['quad_limit'])
    return certify(value, error, tol, relative, "log tail")


@functools.singledispatch
def _integrate_ac(m, f, tol, f_exponent_zero, f_exponent_one, relative) -> float:
    raise UnsupportedRepresentationError(f"Cannot integrate against {type(m).__name__}.")


@_integrate_ac.register
def _(m: AtomMeasure, f, tol, f_exponent_zero, f_exponent_one, relative):
    return 0.0


@_integrate_ac.register
def _(m: MixtureMeasure, f, tol, f_exponent_zero, f_exponent_one, relative):
    return sum(_integrate_ac(c, f, tol, f_exponent_zero, f_exponent_one, relative) for c in m.components)


@_integrate_ac.register(BetaMeasure)
@_integrate_ac.register(LebesgueMeasure)
@_integrate_ac.register(DensityMeasure)
@_integrate_ac.register(JordanPart)
def _(m, f, tol, f_exponent_zero, f_exponent_one, relative):
    return _integrate_density(f, m, tol, f_exponent_zero, f_exponent_one, relative)


def integrate(f: Callable[[float], float], m: MeasureLike, tol: Optional[float] = None,
              f_exponent_zero: float = 0.0, f_exponent_one: float = 0.0, relative: bool = False) -> float:
    """∫ f dm with atoms summed exactly.

    ``f_exponent_zero``/``f_exponent_one`` declare that f behaves like
    u^e near 0 (resp. (1-u)^e near 1); they are folded into the algebraic
    quadrature weights together with the measure's own exponents.
    """
    tol = config['quad_tol'] if tol is None else tol
    value = _integrate_ac(m, f, tol, f_exponent_zero, f_exponent_one, relative)
    for location, mass in atoms(m):
        value += mass * float(f(location))
    return value


def integrate_complex(f: Callable[[float], complex], m: MeasureLike, tol: Optional[float] = None,
                      f_exponent_zero: float = 0.0, f_exponent_one: float = 0.0) -> complex:
    real = integrate(lambda u: f(u).real, m, tol, f_exponent_zero, f_exponent_one)
    imag = integrate(lambda u: f(u).imag, m, tol, f_exponent_zero, f_exponent_one)
    return complex(real, imag)


_mass_cache = {}
_mass_lock = threading.Lock()


def total_mass(m: MeasureLike) -> float:
    key = measure_key(m)
    with _mass_lock:
        if key in _mass_cache:
            return _mass_cache[key]
    if isinstance(m, BetaMeasure):
        mass = 1.0
    elif isinstance(m, LebesgueMeasure):
        mass = m.c
    elif isinstance(m, AtomMeasure):
        mass = m.mass
    elif isinstance(m, MixtureMeasure):
        mass = sum(total_mass(c) for c in m.components)
    else:
        mass = integrate(lambda u: 1.0, m, relative=True)
    with _mass_lock:
        _mass_cache[key] = mass
    return mass


# Beta-type structure and moments

def beta_components(m: MeasureLike) -> List[Tuple[float, float, float]]:
    """(weight, a, b) triples with m = Σ weight·Beta(a,b) + atoms(m).

    Raises UnsupportedRepresentationError when m has other ingredients.
    """
    if isinstance(m, BetaMeasure):
        return [(1.0, m.a, m.b)]
    if isinstance(m, LebesgueMeasure):
        return [(m.c, 1.0, 1.0)]
    if isinstance(m, AtomMeasure):
        return []
    if isinstance(m, DensityMeasure) and m.name == "power":
        a, b = m.params["p"] + 1.0, m.params["q"] + 1.0
        return [(m.params["c"] * float(np.exp(special.betaln(a, b))), a, b)]
    if isinstance(m, MixtureMeasure):
        return [triple for c in m.components for triple in beta_components(c)]
    raise UnsupportedRepresentationError(f"{type(m).__name__} is not a mixture of beta-type components.")


def is_beta_family(m: MeasureLike) -> bool:
    try:
        beta_components(m)
    except UnsupportedRepresentationError:
        return False
    return True


def log_beta_moment(m: MeasureLike, alpha, beta) -> np.ndarray:
    """log ∫ u^alpha (1-u)^beta m(du) in closed form (beta-type components and atoms)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    alpha, beta = np.broadcast_arrays(alpha, beta)
    terms = []
    for weight, a, b in beta_components(m):
        if np.any(a + alpha <= 0.0) or np.any(b + beta <= 0.0):
            raise SingularityError(f"Moment ({alpha.min()}, {beta.min()}) diverges for Beta({a}, {b}).")
        terms.append(np.log(weight) + special.betaln(a + alpha, b + beta) - special.betaln(a, b))
    for location, mass in atoms(m):
        terms.append(np.log(mass) + alpha * np.log(location) + beta * np.log1p(-location))
    if not terms:
        return np.full(alpha.shape, -np.inf)
    return special.logsumexp(np.stack(terms), axis=0)


def beta_moment(m: MeasureLike, alpha, beta, tol: Optional[float] = None) -> np.ndarray:
    """∫ u^alpha (1-u)^beta m(du), elementwise over broadcast alpha, beta."""
    if is_beta_family(m):
        return np.exp(log_beta_moment(m, alpha, beta))
    alpha_arr, beta_arr = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    out = np.empty(alpha_arr.shape)
    for index in np.ndindex(alpha_arr.shape):
        al, be = float(alpha_arr[index]), float(beta_arr[index])
        out[index] = integrate(lambda u, al=al, be=be: u ** al * (1.0 - u) ** be, m, tol=tol or 1e-12,
                               f_exponent_zero=min(al, 0.0), f_exponent_one=min(be, 0.0), relative=True)
    return out


# Dust decomposition and Lévy density

def _sign_changes(m: MeasureLike, b: float) -> Tuple[float, ...]:
    near = np.logspace(-12, np.log10(SPLIT_POINT), 200)
    grid = np.unique(np.concatenate([near, 1.0 - near, np.linspace(0.01, 0.99, 197)]))
    grid = grid[(grid > 0.0) & (grid < 1.0)]
    values = signed_dust_density(m, b, grid, 1.0 - grid)
    scale = max(1.0, b)
    signs = np.where(np.abs(values) <= 1e-14 * scale, 0.0, np.sign(values))
    points = []
    last_index = None
    for index in np.flatnonzero(signs):
        if last_index is not None and signs[index] != signs[last_index]:
            lo, hi = grid[last_index], grid[index]
            root = optimize.brentq(lambda u: float(signed_dust_density(m, b, u)), lo, hi, xtol=1e-15)
            points.append(float(root))
        last_index = index
    return tuple(points)


def dust_decompose(m: MeasureLike, b: float) -> SignedDust:
    """Jordan parts of m - b·λ."""
    if isinstance(m, JordanPart):
        raise UnsupportedRepresentationError("Jordan parts cannot be decomposed again.")
    if b < 0.0:
        raise DomainError("b must be nonnegative.")
    points = _sign_changes(m, b)
    logger.debug("dust decomposition b=%s sign changes=%s", b, points)
    return SignedDust(plus=JordanPart(source=m, b=b, sign=1, breakpoints=points),
                      minus=JordanPart(source=m, b=b, sign=-1, breakpoints=points),
                      b=b)


def integrate_signed(f: Callable[[float], float], dust: SignedDust, tol: Optional[float] = None,
                     f_exponent_zero: float = 0.0) -> float:
    """∫ f d(Λ - bλ) as the difference of the Jordan-part integrals."""
    return (integrate(f, dust.plus, tol, f_exponent_zero=f_exponent_zero)
            - integrate(f, dust.minus, tol, f_exponent_zero=f_exponent_zero))


def levy_density(m: MeasureLike, u) -> np.ndarray:
    """Density at u < 0 of the image of u^{-2}Λ(du) under u -> log(1-u)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr >= 0.0):
        raise DomainError("The Lévy measure lives on (-inf, 0).")
    s = -np.expm1(u_arr)
    one_minus_s = np.exp(u_arr)
    values = density(m, s, one_minus_s) * one_minus_s / s ** 2
    return float(values) if np.ndim(u) == 0 else values
