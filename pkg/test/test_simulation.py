import math

import numpy as np
import pytest

from core.exceptions import DataValidationError, DomainError, UnsupportedRepresentationError
from core.models import BetaMeasure, DensityMeasure, LebesgueMeasure
from core.specfun import gamma_ratio
from service.simulation_service import SimulationService


def fraction(samples, state):
    return float(np.mean([s.raw_state == state for s in samples]))


class TestPaths:
    def test_single_block_never_moves(self, simulation_service, uniform):
        path = simulation_service.simulate_block_path(1, uniform, 5.0, seed=1)
        assert path.states == [1]
        assert path.event_times == [0.0]

    def test_block_path_is_decreasing_and_ends(self, simulation_service, uniform):
        path = simulation_service.simulate_block_path(50, uniform, 50.0, seed=2)
        assert path.states[0] == 50
        assert all(b < a for a, b in zip(path.states, path.states[1:]))
        assert all(0.0 <= t <= 50.0 for t in path.event_times)

    def test_block_path_by_table(self, simulation_service):
        path = simulation_service.simulate_block_path(30, BetaMeasure(a=2.0, b=2.0), 1.0, seed=3, strategy="table")
        assert all(b < a for a, b in zip(path.states, path.states[1:]))

    def test_fixation_path_is_increasing(self, simulation_service, uniform):
        path = simulation_service.simulate_fixation_path(5, uniform, 1.0, cap=10 ** 6, seed=4)
        assert path.states[0] == 5
        assert all(b > a for a, b in zip(path.states, path.states[1:]))

    def test_fixation_path_without_time(self, simulation_service, uniform):
        path = simulation_service.simulate_fixation_path(1, uniform, 0.0, cap=10, seed=5)
        assert path.states == [1]

    def test_fixation_path_hits_the_cap(self, simulation_service, uniform):
        path = simulation_service.simulate_fixation_path(5, uniform, 100.0, cap=20, seed=6)
        assert path.capped
        assert path.states[-1] > 20

    def test_same_seed_same_path(self, simulation_service, uniform):
        first = simulation_service.simulate_block_path(200, uniform, 2.0, seed=11)
        second = simulation_service.simulate_block_path(200, uniform, 2.0, seed=11)
        assert first == second

    def test_invalid_arguments(self, simulation_service, uniform):
        with pytest.raises(DomainError):
            simulation_service.simulate_block_path(0, uniform, 1.0, seed=1)
        with pytest.raises(DomainError):
            simulation_service.simulate_block_path(5, uniform, -1.0, seed=1)
        with pytest.raises(DomainError):
            simulation_service.simulate_fixation_path(5, uniform, 1.0, cap=5, seed=1)

    def test_poisson_strategy_needs_beta_components(self, simulation_service):
        m = DensityMeasure(name="polynomial", params={"c0": 1.0, "c1": 1.0})
        with pytest.raises(UnsupportedRepresentationError):
            simulation_service.simulate_block_path(5, m, 1.0, seed=1, strategy="poisson")


class TestScaledSamples:
    def test_time_zero_is_zero(self, simulation_service, bs_params):
        samples = simulation_service.sample_scaled("block", 1000, bs_params, [0.0, 0.5], 20, seed=1)
        assert len(samples) == 40
        assert all(s.value == 0.0 and s.raw_state == 1000 for s in samples if s.t == 0.0)

    @pytest.mark.parametrize("batch_size, threads", [(100, 4), (450, 1), (7, 3), (1, 2)])
    def test_independent_of_batching_and_workers(self, rate_repository, bs_params, batch_size, threads):
        reference = SimulationService(rate_repository, threads=1, batch_size=100)
        other = SimulationService(rate_repository, threads=threads, batch_size=batch_size)
        first = reference.sample_scaled("block", 500, bs_params, [0.3, 1.0], 450, seed=99)
        second = other.sample_scaled("block", 500, bs_params, [0.3, 1.0], 450, seed=99)
        assert first == second

    @pytest.mark.parametrize("batch_size", [1, 10, 40])
    def test_fixation_independent_of_batch_size(self, rate_repository, bs_params, batch_size):
        reference = SimulationService(rate_repository, threads=1, batch_size=40)
        other = SimulationService(rate_repository, threads=2, batch_size=batch_size)
        first = reference.sample_scaled("fixation", 20, bs_params, [0.5], 40, seed=7, cap=10 ** 6)
        second = other.sample_scaled("fixation", 20, bs_params, [0.5], 40, seed=7, cap=10 ** 6)
        assert first == second

    def test_table_sampler_independent_of_batch_size(self, rate_repository, measure_service):
        params = measure_service.assumption_a_params(BetaMeasure(a=2.0, b=2.0), 0.0)
        small = SimulationService(rate_repository, threads=1, batch_size=3)
        large = SimulationService(rate_repository, threads=1, batch_size=30)
        first = small.sample_scaled("block", 40, params, [0.5], 30, seed=5, strategy="table")
        second = large.sample_scaled("block", 40, params, [0.5], 30, seed=5, strategy="table")
        assert first == second

    def test_two_blocks_hold_for_an_exponential_time(self, simulation_service, bs_params):
        replicates = 10 ** 4
        samples = simulation_service.sample_scaled("block", 2, bs_params, [1.0], replicates, seed=21)
        p = fraction(samples, 2)
        se = math.sqrt(math.exp(-1.0) * (1.0 - math.exp(-1.0)) / replicates)
        assert abs(p - math.exp(-1.0)) <= 4.0 * se

    def test_fixation_line_leaves_two_at_rate_two(self, simulation_service, measure_service):
        params = measure_service.assumption_a_params(LebesgueMeasure(), 1.0)
        replicates = 10 ** 4
        samples = simulation_service.sample_scaled("fixation", 2, params, [0.5], replicates, seed=22)
        p = fraction(samples, 2)
        se = math.sqrt(math.exp(-1.0) * (1.0 - math.exp(-1.0)) / replicates)
        assert abs(p - math.exp(-1.0)) <= 4.0 * se

    def test_poisson_and_table_samplers_agree(self, simulation_service, measure_service):
        params = measure_service.assumption_a_params(BetaMeasure(a=2.0, b=2.0), 0.0)
        replicates = 4000
        means = []
        for strategy in ("poisson", "table"):
            samples = simulation_service.sample_scaled("block", 30, params, [0.5], replicates, seed=23,
                                                       strategy=strategy)
            states = np.array([s.raw_state for s in samples], dtype=float)
            means.append((states.mean(), states.std(ddof=1) / math.sqrt(replicates)))
        (m1, s1), (m2, s2) = means
        assert abs(m1 - m2) <= 5.0 * math.hypot(s1, s2)

    def test_invalid_times(self, simulation_service, bs_params):
        with pytest.raises(DataValidationError):
            simulation_service.sample_scaled("block", 10, bs_params, [1.0, 0.5], 5, seed=1)
        with pytest.raises(DataValidationError):
            simulation_service.sample_scaled("block", 10, bs_params, [], 5, seed=1)
        with pytest.raises(DomainError):
            simulation_service.sample_scaled("block", 10, bs_params, [1.0], 0, seed=1)


class TestEmpiricalCF:
    def test_origin(self, simulation_service, bs_params):
        samples = simulation_service.sample_scaled("block", 100, bs_params, [1.0], 50, seed=2)
        point = simulation_service.empirical_cf(samples, [0.0])[0]
        assert (point.re, point.im, point.se_re, point.se_im) == (1.0, 0.0, 0.0, 0.0)

    def test_degenerate_samples(self, simulation_service, bs_params):
        samples = simulation_service.sample_scaled("block", 100, bs_params, [0.0], 10, seed=2)
        for point in simulation_service.empirical_cf(samples, [-3.0, 1.0, 7.5]):
            assert point.re == 1.0 and point.im == 0.0

    def test_rejects_mixed_times(self, simulation_service, bs_params):
        samples = simulation_service.sample_scaled("block", 100, bs_params, [0.5, 1.0], 10, seed=2)
        with pytest.raises(DataValidationError):
            simulation_service.empirical_cf(samples, [1.0])
        with pytest.raises(DataValidationError):
            simulation_service.empirical_cf([], [1.0])

    @pytest.mark.slow
    def test_bolthausen_sznitman_limit(self, simulation_service, bs_params):
        samples = simulation_service.sample_scaled("block", 10 ** 6, bs_params, [1.0], 10 ** 4, seed=2024)
        point = simulation_service.empirical_cf(samples, [1.0])[0]
        expected = complex(gamma_ratio(1.0 + 1j, 1.0 + 1j * math.exp(-1.0)))
        assert abs(point.re - expected.real) <= 4.0 * point.se_re
        assert abs(point.im - expected.imag) <= 4.0 * point.se_im


class TestDualityMC:
    def test_equal_starts(self, simulation_service, uniform):
        estimate = simulation_service.duality_mc(10, 10, 0.5, uniform, 2000, seed=5)
        assert estimate.lhs == 1.0
        assert estimate.rhs == 1.0

    def test_both_sides_agree(self, simulation_service, uniform):
        estimate = simulation_service.duality_mc(20, 10, 0.5, uniform, 10 ** 4, seed=6)
        assert 0.0 < estimate.rhs < 1.0
        assert abs(estimate.lhs - estimate.rhs) <= 4.0 * math.hypot(estimate.lhs_se, estimate.rhs_se)

    def test_matches_the_exact_value(self, simulation_service, diagnostics_service, uniform):
        exact = diagnostics_service.duality_gap_exact(20, 10, 0.5, uniform, 400)
        estimate = simulation_service.duality_mc(20, 10, 0.5, uniform, 10 ** 4, seed=7)
        assert abs(estimate.rhs - exact.rhs) <= 4.0 * max(estimate.rhs_se, 1e-3)
