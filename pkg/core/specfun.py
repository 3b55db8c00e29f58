"""Gamma-family special functions on the right half-plane.

Thin, domain-checked wrappers around :mod:`scipy.special`. Arguments may be
scalars or arrays; scalars come back as Python ``complex``/``float``.
"""
from typing import Union

import numpy as np
from scipy import special

from core.exceptions import DomainError

EULER_GAMMA = float(np.euler_gamma)

ArrayLike = Union[complex, float, np.ndarray]


def _right_half_plane(z: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite argument.")
    if np.any(arr.real <= 0.0):
        raise DomainError(f"{name} requires re(z) > 0.")
    return arr


def _unwrap(z: ArrayLike, values: np.ndarray):
    if np.ndim(z) == 0:
        return complex(values)
    return values


def log_gamma(z: ArrayLike):
    """Principal-branch log Γ(z) for re(z) > 0."""
    arr = _right_half_plane(z, "log_gamma")
    values = special.loggamma(arr)
    on_axis = arr.imag == 0.0
    if np.any(on_axis):
        values = np.where(on_axis, special.gammaln(arr.real) + 0j, values)
    return _unwrap(z, values)


def digamma(z: ArrayLike):
    """Ψ(z) = Γ'(z)/Γ(z) for re(z) > 0; exactly real on the real axis."""
    arr = _right_half_plane(z, "digamma")
    values = special.psi(arr)
    on_axis = arr.imag == 0.0
    if np.any(on_axis):
        values = np.where(on_axis, special.psi(arr.real) + 0j, values)
    return _unwrap(z, values)


def gamma_ratio(numerator: ArrayLike, denominator: ArrayLike):
    """Γ(numerator)/Γ(denominator) evaluated through log Γ."""
    return np.exp(np.asarray(log_gamma(numerator)) - np.asarray(log_gamma(denominator)))


def harmonic(k):
    """H_k = Σ_{i≤k} 1/i for integer k ≥ 0 (array aware)."""
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise DomainError("harmonic numbers need k >= 0.")
    values = special.digamma(k_arr + 1.0) + EULER_GAMMA
    return float(values) if np.ndim(k) == 0 else values


def log_binom(n, k):
    """log binom(n, k) for real n ≥ k ≥ 0 via log-gamma."""
    n_arr = np.asarray(n, dtype=float)
    k_arr = np.asarray(k, dtype=float)
    return special.gammaln(n_arr + 1.0) - special.gammaln(k_arr + 1.0) - special.gammaln(n_arr - k_arr + 1.0)


def binom_poly_coefficients(ix, order: int) -> np.ndarray:
    """Coefficients c_n = (-1)^n binom(ix, n) for n = 2..order, stacked along axis 0.

    (e^{ix log(1-u)} - 1 + ixu) / u^2 = Σ_{n≥2} c_n u^{n-2} for |u| < 1.
    """
    ix = np.asarray(ix, dtype=complex)
    coeffs = np.empty((order - 1,) + ix.shape, dtype=complex)
    c = ix * (ix - 1.0) / 2.0
    for n in range(2, order + 1):
        coeffs[n - 2] = c if n % 2 == 0 else -c
        c = c * (ix - n) / (n + 1)
    return coeffs
