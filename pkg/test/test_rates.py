import numpy as np
import pytest

from core.exceptions import IndexRangeError, TruncationError
from core.models import AtomMeasure, BetaMeasure, LebesgueMeasure, MixtureMeasure
from core.specfun import harmonic
from data import measures
from data.rate_repository import AliasTable, compute_block_row


class TestBlockRates:
    @pytest.mark.parametrize("m", [BetaMeasure(a=1.0, b=1.0), BetaMeasure(a=2.0, b=5.0), BetaMeasure(a=0.5, b=0.5)])
    def test_pair_merger_rate_is_total_mass(self, rate_service, m):
        assert rate_service.block_rate(2, 1, m) == pytest.approx(1.0, rel=1e-13)

    def test_uniform_k3(self, rate_service, uniform):
        assert rate_service.block_rate(3, 2, uniform) == pytest.approx(1.5, rel=1e-14)
        assert rate_service.block_rate(3, 1, uniform) == pytest.approx(0.5, rel=1e-14)

    def test_closed_form_matches_quadrature(self, rate_service):
        m = BetaMeasure(a=2.0, b=3.0)
        assert rate_service.has_closed_form(m)
        closed = rate_service.block_rate(10, 7, m)
        assert closed == pytest.approx(rate_service.quadrature_block_rate(10, 7, m), rel=1e-10)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
    def test_beta_grid_small_k(self, rate_service, a, b):
        m = BetaMeasure(a=a, b=b)
        for k in range(2, 13):
            for j in range(1, k):
                assert rate_service.block_rate(k, j, m) == pytest.approx(
                    rate_service.quadrature_block_rate(k, j, m), rel=1e-10)

    @pytest.mark.slow
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
    def test_beta_grid_up_to_50(self, rate_service, a, b):
        m = BetaMeasure(a=a, b=b)
        for k in range(13, 51):
            for j in range(1, k):
                assert rate_service.block_rate(k, j, m) == pytest.approx(
                    rate_service.quadrature_block_rate(k, j, m), rel=1e-10)

    def test_bs_drift_identity(self, rate_repository, lebesgue):
        for k in (2, 5, 40, 1000):
            j = np.arange(1, k, dtype=float)
            scaled = (k - j) / k * rate_repository.block_row(k, lebesgue)
            assert np.allclose(scaled, 1.0 / (k - j + 1.0), rtol=1e-12, atol=0.0)
            assert scaled.sum() == pytest.approx(harmonic(k) - 1.0, abs=1e-12)

    def test_rate_decomposition(self):
        m, b = BetaMeasure(a=1.0, b=2.0), 2.0
        dust = measures.dust_decompose(m, b)
        for k in (3, 8):
            split = (b * compute_block_row(k, LebesgueMeasure()) + compute_block_row(k, dust.plus)
                     - compute_block_row(k, dust.minus))
            assert np.allclose(compute_block_row(k, m), split, rtol=0.0, atol=1e-9)

    def test_mixture_rows_add(self, rate_service):
        beta, atom = BetaMeasure(a=2.0, b=2.0), AtomMeasure(location=0.3, mass=0.5)
        mixture = MixtureMeasure(components=[beta, atom])
        for j in range(1, 6):
            assert rate_service.block_rate(6, j, mixture) == pytest.approx(
                rate_service.block_rate(6, j, beta) + rate_service.block_rate(6, j, atom), rel=1e-12)

    def test_index_range(self, rate_service, uniform):
        with pytest.raises(IndexRangeError):
            rate_service.block_rate(3, 3, uniform)
        with pytest.raises(IndexRangeError):
            rate_service.block_rate(1, 1, uniform)


class TestFixationRates:
    def test_lebesgue(self, rate_service, lebesgue):
        assert rate_service.fixation_rate(2, 3, lebesgue) == pytest.approx(1.0, rel=1e-14)

    def test_uniform_from_one(self, rate_service, uniform):
        assert rate_service.fixation_rate(1, 2, uniform) == pytest.approx(0.5, rel=1e-14)

    def test_closed_form_matches_quadrature(self, rate_service):
        m = BetaMeasure(a=1.0, b=2.0)
        assert rate_service.fixation_rate(5, 8, m) == pytest.approx(
            rate_service.quadrature_fixation_rate(5, 8, m), rel=1e-10)

    def test_total_rate(self, rate_service, rate_repository, lebesgue):
        assert rate_service.fixation_total_rate(3, lebesgue) == pytest.approx(3.0, rel=1e-14)
        m = BetaMeasure(a=2.0, b=2.0)
        partial = float(rate_repository.fixation_row(3, m, 2000).sum())
        assert partial <= rate_service.fixation_total_rate(3, m)
        assert partial == pytest.approx(rate_service.fixation_total_rate(3, m), rel=1e-4)

    def test_fixation_drift_identity(self, rate_repository, lebesgue):
        for k in (1, 4, 30, 500):
            s = np.arange(1, k + 1, dtype=float)
            total = float(np.sum(s / k * rate_repository.fixation_row(k, lebesgue, k)))
            assert total == pytest.approx(harmonic(k + 1) - 1.0, abs=1e-12)

    def test_index_range(self, rate_service, uniform):
        with pytest.raises(IndexRangeError):
            rate_service.fixation_rate(2, 2, uniform)


class TestJumpLaws:
    def test_two_blocks_merge_into_one(self, rate_service, uniform):
        law = rate_service.jump_pmf_block(2, uniform)
        assert law.targets == [(1, 1.0)]

    def test_uniform_k3(self, rate_service, uniform):
        law = rate_service.jump_pmf_block(3, uniform)
        assert law.total_rate == pytest.approx(2.0, rel=1e-14)
        assert [j for j, _ in law.targets] == [1, 2]
        assert [p for _, p in law.targets] == pytest.approx([0.25, 0.75], rel=1e-14)

    @pytest.mark.parametrize("k", [2, 7, 60])
    def test_block_law_is_normalized(self, rate_service, k):
        law = rate_service.jump_pmf_block(k, BetaMeasure(a=0.7, b=1.3))
        assert sum(p for _, p in law.targets) == pytest.approx(1.0, abs=1e-12)
        assert law.tail_mass_bound == 0.0

    def test_fixation_law_from_one(self, rate_service, lebesgue):
        law = rate_service.jump_pmf_fixation(1, lebesgue, tail_tol=1e-5)
        probabilities = dict(law.targets)
        assert probabilities[2] == pytest.approx(0.5, rel=1e-13)
        assert probabilities[3] == pytest.approx(1.0 / 6.0, rel=1e-13)
        assert probabilities[10] == pytest.approx(1.0 / 90.0, rel=1e-13)
        assert law.total_rate == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("m", [LebesgueMeasure(), BetaMeasure(a=2.0, b=2.0), BetaMeasure(a=1.0, b=3.0)])
    def test_fixation_law_accounts_for_the_tail(self, rate_service, m):
        law = rate_service.jump_pmf_fixation(3, m, tail_tol=1e-5)
        assert law.tail_mass_bound <= 1e-5 + 1e-12
        assert 1.0 - 1e-12 <= law.covered_mass() + law.tail_mass_bound <= 1.0 + 1e-12

    def test_fixation_law_with_closed_form_tail(self, rate_service, lebesgue):
        law = rate_service.jump_pmf_fixation(1, lebesgue, tail_tol=1e-10)
        assert law.total_rate == pytest.approx(1.0, rel=1e-14)
        assert law.probability(2) == pytest.approx(0.5, rel=1e-13)
        assert law.probability(3) == pytest.approx(1.0 / 6.0, rel=1e-13)
        for j in (10, 5000, 10 ** 7, 10 ** 11):
            assert law.probability(j) == pytest.approx(1.0 / ((j - 1.0) * j), rel=1e-12)
        assert law.tail is not None
        assert law.tail_mass_bound == 0.0
        assert 1.0 - 1e-12 <= law.covered_mass() + law.tail_mass_bound / law.total_rate <= 1.0 + 1e-12

    def test_scaled_lebesgue_total_rate(self, rate_service):
        law = rate_service.jump_pmf_fixation(3, LebesgueMeasure(c=2.5), tail_tol=1e-10)
        assert law.total_rate == pytest.approx(7.5, rel=1e-14)
        assert law.probability(4) == pytest.approx(0.5, rel=1e-13)

    def test_fixation_tail_beyond_reach(self, rate_service):
        with pytest.raises(TruncationError):
            rate_service.jump_pmf_fixation(1, BetaMeasure(a=1.0, b=1.0 + 1e-9), tail_tol=1e-10)

    def test_harmonic_tail_steps(self, rate_repository, lebesgue):
        table = rate_repository.fixation_table(1, lebesgue, 1e-2)
        assert table.rates.size == 99
        assert table.tail_mass == pytest.approx(0.01, rel=1e-14)
        rng = np.random.Generator(np.random.Philox(11))
        steps = np.array([table.sample_tail_step(rng) for _ in range(100000)])
        assert steps.min() >= 100
        assert np.mean(steps >= 1000) == pytest.approx(0.1, abs=0.005)

    def test_alias_sampling_frequencies(self):
        table = AliasTable(np.array([0.5, 1.5, 2.0]))
        draws = table.sample(np.random.Generator(np.random.Philox(3)), 200000)
        frequencies = np.bincount(draws, minlength=3) / draws.size
        assert np.allclose(frequencies, [0.125, 0.375, 0.5], atol=0.005)


class TestCDI:
    def test_beta_below_one_comes_down(self, rate_service):
        report = rate_service.cdi_diagnostic(BetaMeasure(a=0.5, b=1.0), 10 ** 4)
        assert report.verdict_hint == "converges-evidence"
        assert report.authoritative == "comes-down"

    def test_beta_above_one_stays_infinite(self, rate_service):
        report = rate_service.cdi_diagnostic(BetaMeasure(a=1.5, b=1.0), 10 ** 4)
        assert report.verdict_hint == "diverges-evidence"
        assert report.authoritative == "stays-infinite"

    def test_bolthausen_sznitman_grows_like_k_log_k(self, rate_service, uniform):
        report = rate_service.cdi_diagnostic(uniform, 10 ** 4)
        assert len(report.eta) == 10 ** 4 - 1
        assert np.all(np.diff(report.partial_sums) > 0.0)
        eta = np.asarray(report.eta)
        k = np.arange(2, 10 ** 4 + 1)
        ratio = eta / (k * np.log(k))
        assert 0.9 < ratio[-1] < 1.2
        assert report.verdict_hint == "diverges-evidence"

    def test_small_k(self, rate_service, uniform):
        with pytest.raises(IndexRangeError):
            rate_service.cdi_diagnostic(uniform, 1)


class TestRateUtilities:
    @pytest.mark.parametrize("k", [2, 7, 40])
    def test_lebesgue_totals(self, rate_service, lebesgue, k):
        assert rate_service.block_total_rate(k, lebesgue) == pytest.approx(k - 1.0, rel=1e-13)
        assert rate_service.fixation_total_rate(k, lebesgue) == pytest.approx(float(k), rel=1e-13)

    def test_beta_moment(self):
        assert float(measures.beta_moment(BetaMeasure(a=2.0, b=3.0), 1.0, 2.0)) == pytest.approx(4.0 / 35.0,
                                                                                                 rel=1e-13)
        atom = AtomMeasure(location=0.5, mass=2.0)
        assert float(measures.beta_moment(atom, 1.0, 1.0)) == pytest.approx(0.5, rel=1e-14)
        row = measures.beta_moment(LebesgueMeasure(), np.array([0.0, 1.0, 2.0]), 0.0)
        assert row == pytest.approx([1.0, 0.5, 1.0 / 3.0], rel=1e-13)

    def test_dust_rates(self, rate_service, measure_service, bs_params, lebesgue):
        assert np.all(rate_service.dust_block_rates(12, bs_params) == 0.0)
        params = measure_service.assumption_a_params(BetaMeasure(a=1.0, b=2.0))
        dust = rate_service.dust_block_rates(6, params)
        expected = [rate_service.block_rate(6, j, params.measure) - 2.0 * rate_service.block_rate(6, j, lebesgue)
                    for j in range(1, 6)]
        assert dust == pytest.approx(expected, abs=1e-13)
        assert np.all(dust <= 0.0)

    def test_dust_fixation_rates(self, rate_service, measure_service):
        params = measure_service.assumption_a_params(BetaMeasure(a=2.0, b=2.0), 0.0)
        dust = rate_service.dust_fixation_rates(3, params, 5)
        assert dust == pytest.approx([rate_service.fixation_rate(3, 3 + s, params.measure) for s in range(1, 6)],
                                     rel=1e-13)
