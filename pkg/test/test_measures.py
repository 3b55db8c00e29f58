import json
import math
import warnings
from multiprocessing.pool import ThreadPool

import numpy as np
import pytest
from scipy import integrate
from scipy.integrate import IntegrationWarning

from core.exceptions import (AssumptionViolatedError, DataValidationError, DomainError, MeasureNotFoundError,
                             NumericalError)
from core.models import AtomMeasure, BetaMeasure, DensityMeasure, LebesgueMeasure, MixtureMeasure
from core.specfun import EULER_GAMMA, digamma
from data import ComputationContext, get_current_computation_context, measures


class TestShorthand:
    def test_beta(self, measure_service):
        assert measure_service.load_measure("beta:1.5,2") == BetaMeasure(a=1.5, b=2.0)

    def test_lebesgue_default_and_scaled(self, measure_service):
        assert measure_service.load_measure("lebesgue") == LebesgueMeasure(c=1.0)
        assert measure_service.load_measure("lebesgue:2.5") == LebesgueMeasure(c=2.5)

    def test_atom(self, measure_service):
        assert measure_service.load_measure("atom:0.5,2") == AtomMeasure(location=0.5, mass=2.0)

    def test_inline_json_mixture(self, measure_service):
        payload = {"kind": "mixture", "components": [{"kind": "beta", "a": 2, "b": 2},
                                                      {"kind": "atom", "location": 0.25, "mass": 0.5}]}
        m = measure_service.load_measure(json.dumps(payload))
        assert isinstance(m, MixtureMeasure)
        assert measure_service.total_mass(m) == pytest.approx(1.5, abs=1e-14)

    def test_json_file(self, measure_service, tmp_path):
        path = tmp_path / "measure.json"
        path.write_text(json.dumps({"kind": "density", "name": "power", "params": {"c": 2.0, "p": 1.0, "q": 0.0}}))
        m = measure_service.load_measure(f"@{path}")
        assert isinstance(m, DensityMeasure)
        assert m.exponent_zero == 1.0

    def test_missing_file(self, measure_service, tmp_path):
        with pytest.raises(MeasureNotFoundError):
            measure_service.load_measure(f"@{tmp_path / 'absent.json'}")

    @pytest.mark.parametrize("reference", ["", "beta:1", "beta:x,1", "beta:-1,1", "atom:1.5,1", "gamma:1,1",
                                           "{not json", '{"kind": "beta", "a": 1, "b": 1, "extra": 1}'])
    def test_invalid(self, measure_service, reference):
        with pytest.raises(DataValidationError):
            measure_service.load_measure(reference)


class TestIntegrate:
    def test_beta_mean(self, measure_service):
        assert measure_service.integrate(lambda u: u, BetaMeasure(a=1.0, b=2.0), 1e-10) == pytest.approx(
            1.0 / 3.0, abs=1e-10)

    def test_atom_mass(self, measure_service):
        assert measure_service.integrate(lambda u: 1.0, AtomMeasure(location=0.5, mass=2.0)) == 2.0

    @pytest.mark.parametrize("m", [BetaMeasure(a=0.5, b=1.5), LebesgueMeasure(c=3.0),
                                   DensityMeasure(name="polynomial", params={"c0": 1.0, "c2": 3.0}),
                                   DensityMeasure(name="loglog_tail", params={"c": 1.0})])
    def test_mass_consistency(self, measure_service, m):
        expected = measures.total_mass(m)
        assert measure_service.integrate(lambda u: 1.0, m) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("m", [BetaMeasure(a=1.5, b=1.0), BetaMeasure(a=2.0, b=2.0)])
    def test_first_order_singularity_against_endpoint_weights(self, m):
        # ∫u^{-1}Beta(1.5,1)(du) = ∫u^{-1}Beta(2,2)(du) = 3
        value = measures.integrate(lambda u: 1.0 / u, m, 1e-11, f_exponent_zero=-1.0)
        assert value == pytest.approx(3.0, abs=1e-9)

    def test_large_endpoint_exponents(self):
        m = BetaMeasure(a=1.0, b=40.0)
        assert measures.integrate(lambda u: 1.0, m, 1e-11) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("alpha, beta", [(-0.5, 0.0), (0.0, 1.0), (12.0, -0.7), (300.0, 300.0)])
    def test_off_endpoints_keeps_powers_finite(self, alpha, beta):
        for u in (0.0, 0.5, 1.0):
            moved = measures.off_endpoints(u, 0.0, 1.0, alpha, beta)
            assert 0.0 < moved < 1.0
            assert 0.0 < moved ** alpha < math.inf
            assert 0.0 < (1.0 - moved) ** beta < math.inf
        assert measures.off_endpoints(0.5, 0.0, 1.0, alpha, beta) == 0.5

    def test_signed_dust_of_beta_1_2(self):
        dust = measures.dust_decompose(BetaMeasure(a=1.0, b=2.0), 2.0)
        value = measures.integrate_signed(lambda u: 1.0 / u, dust, 1e-11, f_exponent_zero=-1.0)
        assert value == pytest.approx(2.0 * (digamma(1.0).real - digamma(2.0).real), abs=1e-9)

    def test_decomposition_consistency(self, rng):
        m = BetaMeasure(a=1.0, b=3.0)
        b = 3.0
        dust = measures.dust_decompose(m, b)
        for _ in range(20):
            coeffs = rng.uniform(-1.0, 1.0, 4)

            def f(u, coeffs=coeffs):
                return float(np.polynomial.polynomial.polyval(u, coeffs))

            signed = measures.integrate_signed(f, dust)
            direct = measures.integrate(f, m) - b * measures.integrate(f, LebesgueMeasure())
            assert signed == pytest.approx(direct, abs=1e-9)


class TestDustDecompose:
    def test_uniform_has_no_dust(self):
        dust = measures.dust_decompose(BetaMeasure(a=1.0, b=1.0), 1.0)
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(measures.density(dust.plus, u), 0.0, atol=1e-15)
        assert np.allclose(measures.density(dust.minus, u), 0.0, atol=1e-15)

    def test_beta_1_2_is_purely_negative(self):
        dust = measures.dust_decompose(BetaMeasure(a=1.0, b=2.0), 2.0)
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(measures.density(dust.plus, u), 0.0)
        assert np.allclose(measures.density(dust.minus, u), 2.0 * u, atol=1e-13)

    def test_zero_b_keeps_the_measure(self):
        m = BetaMeasure(a=2.0, b=2.0)
        dust = measures.dust_decompose(m, 0.0)
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(measures.density(dust.plus, u), measures.density(m, u))
        assert np.allclose(measures.density(dust.minus, u), 0.0)

    def test_negative_b(self):
        with pytest.raises(DomainError):
            measures.dust_decompose(BetaMeasure(a=2.0, b=2.0), -1.0)


class TestAssumptionA:
    @pytest.mark.parametrize("b0", [0.5, 1.0, 2.0, 3.5])
    def test_beta_1_b_drift(self, measure_service, b0):
        params = measure_service.assumption_a_params(BetaMeasure(a=1.0, b=b0))
        assert params.b == b0
        assert params.a == pytest.approx(b0 * (1.0 + digamma(b0).real), abs=1e-9)

    def test_lebesgue(self, measure_service):
        params = measure_service.assumption_a_params(LebesgueMeasure(), 1.0)
        assert params.a == pytest.approx(1.0 - EULER_GAMMA, abs=1e-12)

    def test_dust_beta_2_2(self, measure_service):
        params = measure_service.assumption_a_params(BetaMeasure(a=2.0, b=2.0), 0.0)
        assert params.a == pytest.approx(-3.0, abs=1e-10)
        assert params.dust_integral == pytest.approx(3.0, abs=1e-10)

    def test_quadrature_matches_closed_form(self, measure_service):
        polynomial = DensityMeasure(name="polynomial", params={"c0": 0.0, "c1": 6.0, "c2": -6.0})
        params = measure_service.assumption_a_params(polynomial, 0.0)
        assert params.a == pytest.approx(-3.0, abs=1e-9)

    def test_b_is_required_outside_beta_1_b(self, measure_service):
        with pytest.raises(DomainError):
            measure_service.assumption_a_params(BetaMeasure(a=2.0, b=2.0))

    def test_wrong_b_violates_the_assumption(self, measure_service):
        with pytest.raises(AssumptionViolatedError):
            measure_service.assumption_a_params(BetaMeasure(a=1.0, b=1.0), 0.5)

    def test_beta_below_one_violates_the_assumption(self, measure_service):
        with pytest.raises(AssumptionViolatedError):
            measure_service.assumption_a_params(BetaMeasure(a=0.5, b=1.0), 0.0)


class TestLevyDensity:
    @pytest.mark.parametrize("b0", [0.5, 1.0, 2.0])
    def test_beta_1_b(self, measure_service, b0):
        expected = b0 * math.exp(-b0) / (1.0 - math.exp(-1.0)) ** 2
        assert measure_service.levy_density(BetaMeasure(a=1.0, b=b0), -1.0) == pytest.approx(expected, rel=1e-12)

    def test_lebesgue(self, measure_service):
        expected = math.exp(-1.0) / (1.0 - math.exp(-1.0)) ** 2
        assert measure_service.levy_density(LebesgueMeasure(), -1.0) == pytest.approx(expected, rel=1e-12)

    def test_vanishes_far_out(self, measure_service):
        assert measure_service.levy_density(BetaMeasure(a=2.0, b=2.0), -50.0) < 1e-20

    @pytest.mark.parametrize("b0", [0.5, 1.0, 2.0])
    def test_levy_measure_integrability(self, b0):
        m = BetaMeasure(a=1.0, b=b0)
        near, _ = integrate.quad(lambda u: u * u * measures.levy_density(m, u), -1.0, -1e-12, limit=200)
        far, _ = integrate.quad(lambda u: measures.levy_density(m, u), -np.inf, -1.0, limit=200)
        assert math.isfinite(near + far)

    def test_positive_argument(self, measure_service):
        with pytest.raises(DomainError):
            measure_service.levy_density(BetaMeasure(a=1.0, b=1.0), 0.5)


class TestComputationContext:
    def test_threads_leave_warning_filters_alone(self):
        filters = warnings.filters
        snapshot = list(filters)

        def work(i):
            with ComputationContext("outer"):
                with ComputationContext("inner") as inner:
                    value = measures.integrate(lambda u: u ** (i % 5), BetaMeasure(a=0.5, b=1.5), 1e-10)
                    return get_current_computation_context() is inner and math.isfinite(value)

        with ThreadPool(8) as pool:
            results = pool.map(work, range(200))
        assert all(results)
        assert warnings.filters is filters
        assert list(warnings.filters) == snapshot

    def test_integration_warnings_are_silenced(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.warn("roundoff", IntegrationWarning)
        assert caught == []

    def test_unexpected_failures_become_numerical_errors(self):
        with pytest.raises(NumericalError):
            with ComputationContext("division"):
                measures.integrate(lambda u: 1.0 / 0.0, BetaMeasure(a=2.0, b=2.0))
