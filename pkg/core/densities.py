"""Named built-in densities for measures of kind ``density``.

Densities are evaluated as ``evaluate(u, one_minus_u, params)`` so that the
behaviour near u = 1 can be computed without cancellation. Only names in
``DENSITY_REGISTRY`` can be deserialized; arbitrary code never is.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

Evaluator = Callable[[np.ndarray, np.ndarray, Mapping[str, float]], np.ndarray]

LOGLOG_TAIL_START = 1.0 - np.exp(-np.e)


@dataclass(frozen=True)
class BuiltinDensity:
    name: str
    evaluate: Evaluator
    required: Tuple[str, ...]
    exponent_zero: Callable[[Mapping[str, float]], Optional[float]]
    exponent_one: Callable[[Mapping[str, float]], Optional[float]]
    log_exponent_one: Optional[float] = None
    loglog_exponent_one: Optional[float] = None
    breakpoints: Callable[[Mapping[str, float]], Tuple[float, ...]] = field(default=lambda params: ())
    # density of the image measure under u -> -log(1-u); needed when exponent_one is -1
    w_density: Optional[Callable[[np.ndarray, Mapping[str, float]], np.ndarray]] = None


def _power(u, v, params):
    return params["c"] * np.power(u, params["p"]) * np.power(v, params["q"])


def _polynomial(u, v, params):
    degree = max(int(key[1:]) for key in params)
    coeffs = [params.get(f"c{i}", 0.0) for i in range(degree + 1)]
    return np.polynomial.polynomial.polyval(u, coeffs)


def _loglog_tail(u, v, params):
    v = np.asarray(v, dtype=float)
    w = -np.log(np.where(v > 0.0, v, 1.0))
    inside = w > np.e
    safe_w = np.where(inside, w, np.e + 1.0)
    safe_v = np.where(inside, v, 1.0)
    values = params["c"] / (safe_v * safe_w * np.log(safe_w) ** 2)
    return np.where(inside, values, 0.0)


def _loglog_tail_in_w(w, params):
    w = np.asarray(w, dtype=float)
    inside = w > np.e
    safe_w = np.where(inside, w, np.e + 1.0)
    return np.where(inside, params["c"] / (safe_w * np.log(safe_w) ** 2), 0.0)


def _polynomial_exponent_zero(params):
    degrees = [int(key[1:]) for key, coeff in params.items() if coeff != 0.0]
    return float(min(degrees)) if degrees else None


DENSITY_REGISTRY: Dict[str, BuiltinDensity] = {
    "power": BuiltinDensity(
        name="power",
        evaluate=_power,
        required=("c", "p", "q"),
        exponent_zero=lambda params: params["p"],
        exponent_one=lambda params: params["q"],
    ),
    "polynomial": BuiltinDensity(
        name="polynomial",
        evaluate=_polynomial,
        required=("c0",),
        exponent_zero=_polynomial_exponent_zero,
        exponent_one=lambda params: 0.0,
    ),
    "loglog_tail": BuiltinDensity(
        name="loglog_tail",
        evaluate=_loglog_tail,
        required=("c",),
        exponent_zero=lambda params: None,
        exponent_one=lambda params: -1.0,
        log_exponent_one=-1.0,
        loglog_exponent_one=-2.0,
        breakpoints=lambda params: (float(LOGLOG_TAIL_START),),
        w_density=_loglog_tail_in_w,
    ),
}
