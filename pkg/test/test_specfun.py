import math

import numpy as np
import pytest
from scipy import integrate

from core.exceptions import DomainError
from core.specfun import EULER_GAMMA, binom_poly_coefficients, digamma, gamma_ratio, harmonic, log_binom, log_gamma


@pytest.fixture(scope="module")
def grid():
    rng = np.random.default_rng(7)
    return rng.uniform(0.1, 50.0, 100) + 1j * rng.uniform(-50.0, 50.0, 100)


def test_log_gamma_known_values():
    assert abs(log_gamma(1.0)) == 0.0
    assert abs(log_gamma(5.0) - math.log(24.0)) <= 1e-13


def test_log_gamma_on_imaginary_line():
    value = log_gamma(1.0 + 1j)
    assert abs(math.exp(2.0 * value.real) - math.pi / math.sinh(math.pi)) <= 1e-12


def test_log_gamma_recurrence(grid):
    ratio = np.exp(log_gamma(grid + 1.0) - log_gamma(grid))
    assert np.max(np.abs(ratio / grid - 1.0)) <= 1e-11


def test_digamma_known_values():
    assert abs(digamma(1.0) + EULER_GAMMA) <= 1e-15
    assert abs(digamma(2.0) - digamma(1.0) - 1.0) <= 1e-15


def test_digamma_is_real_on_the_axis():
    for b in (0.3, 1.0, 2.5, 40.0):
        assert digamma(b).imag == 0.0


def test_digamma_recurrence(grid):
    assert np.max(np.abs(digamma(grid + 1.0) - digamma(grid) - 1.0 / grid)) <= 1e-12


@pytest.mark.parametrize("z", [0.5, 1.0, 2.0, 5.0])
def test_digamma_matches_gauss_integral(z):
    # Ψ(z) = ∫_0^∞ (e^{-t}/t - e^{-zt}/(1-e^{-t})) dt
    def integrand(t):
        if t == 0.0:
            return z - 1.5
        return math.exp(-t) / t - math.exp(-z * t) / -math.expm1(-t)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)
    assert abs(value - digamma(z).real) <= 1e-9


def test_left_half_plane_is_rejected():
    with pytest.raises(DomainError):
        log_gamma(-0.5 + 1j)
    with pytest.raises(DomainError):
        digamma(np.array([1.0, 0.0]))


def test_gamma_ratio_and_binomials():
    assert abs(gamma_ratio(6.0, 4.0) - 20.0) <= 1e-12
    assert abs(math.exp(log_binom(10, 3)) - 120.0) <= 1e-9
    assert abs(harmonic(4) - 25.0 / 12.0) <= 1e-14
    assert np.allclose(harmonic(np.array([0, 1, 2])), [0.0, 1.0, 1.5], atol=1e-15)


def test_binomial_series_reproduces_the_jump_kernel():
    x, u = 1.7, 0.05
    coeffs = binom_poly_coefficients(1j * x, 30)
    series = sum(c * u ** n for n, c in enumerate(coeffs))
    direct = (np.exp(1j * x * math.log1p(-u)) - 1.0 + 1j * x * u) / u ** 2
    assert abs(series - direct) <= 1e-13
