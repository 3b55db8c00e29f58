# service/rate_service.py
import logging
from typing import Optional, Tuple

import numpy as np

from core.exceptions import DomainError, IndexRangeError, LambdaOUException, NumericalError
from core.models import BetaMeasure, CDIReport, HarmonicTail, JumpLaw, LebesgueMeasure, LimitParams, MeasureSpec
from core.specfun import log_binom
from data import ComputationContext, config
from data import measures
from data.rate_repository import RateRepositoryInterface
from service.measure_service import assumption_a_holds

logger = logging.getLogger(__name__)

CONVERGES_BELOW = 0.6
DIVERGES_ABOVE = 0.66


class RateServiceInterface:
    def block_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        """
        Rate q_{k,j} at which the block counting process jumps from k to j blocks.

        Args:
            k (int): Current number of blocks, k ≥ 2.
            j (int): Target, 1 ≤ j ≤ k-1.
            m (MeasureSpec): Driving measure Λ.

        Returns:
            float: binom(k, j-1)∫u^{k-j-1}(1-u)^{j-1}Λ(du).

        Raises:
            IndexRangeError: If (k, j) is outside the valid range.
            QuadratureError: If a quadrature-based moment cannot be certified.
        """
        pass

    def fixation_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        """
        Rate γ_{k,j} at which the fixation line jumps from k to j.

        Args:
            k (int): Current state, k ≥ 1.
            j (int): Target, j ≥ k+1.
            m (MeasureSpec): Driving measure Λ.

        Returns:
            float: binom(j, j-k+1)∫u^{j-k-1}(1-u)^kΛ(du).

        Raises:
            IndexRangeError: If (k, j) is outside the valid range.
        """
        pass

    def quadrature_block_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        """
        q_{k,j} by adaptive quadrature of the density, bypassing any closed form.
        """
        pass

    def quadrature_fixation_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        """
        γ_{k,j} by adaptive quadrature of the density, bypassing any closed form.
        """
        pass

    def has_closed_form(self, m: MeasureSpec) -> bool:
        """
        Whether the rates of m come from beta functions rather than quadrature.
        """
        pass

    def block_total_rate(self, k: int, m: MeasureSpec) -> float:
        """
        Total jump rate Σ_j q_{k,j} out of state k.
        """
        pass

    def fixation_total_rate(self, k: int, m: MeasureSpec) -> float:
        """
        Total jump rate Σ_j γ_{k,j} = Σ_{s<k}(s+1)∫(1-u)^sΛ(du) out of state k.
        """
        pass

    def jump_pmf_block(self, k: int, m: MeasureSpec) -> JumpLaw:
        """
        Jump law of the block counting process from k.

        Returns:
            JumpLaw: Targets 1..k-1 with probabilities q_{k,j}/Σq, tail_mass_bound 0.

        Raises:
            IndexRangeError: If k < 2.
        """
        pass

    def jump_pmf_fixation(self, k: int, m: MeasureSpec, tail_tol: Optional[float] = None) -> JumpLaw:
        """
        Jump law of the fixation line from k, truncated once the remaining rate
        mass is at most tail_tol times the total rate.

        Returns:
            JumpLaw: Targets k+1..k+J; tail_mass_bound is the exact probability of the omitted targets.
                For Λ = c·λ the targets beyond J are kept as a closed-form ``tail`` instead and
                tail_mass_bound is 0.

        Raises:
            TruncationError: If 10^6 targets do not reach the tolerance.
        """
        pass

    def dust_block_rates(self, k: int, params: LimitParams) -> np.ndarray:
        """
        Signed dust rates q^D_{k,j} = q_{k,j}(Λ) - b·q_{k,j}(λ) for j = 1..k-1.
        """
        pass

    def dust_fixation_rates(self, k: int, params: LimitParams, count: int) -> np.ndarray:
        """
        Signed dust rates γ^D_{k,k+s} = γ_{k,k+s}(Λ) - b·γ_{k,k+s}(λ) for s = 1..count.
        """
        pass

    def cdi_diagnostic(self, m: MeasureSpec, k_max: int) -> CDIReport:
        """
        η_k = kΣ_{j=0}^{k-2}∫(1-u)^jΛ(du) for k = 2..k_max and the partial sums of 1/η_k.

        The verdict hint compares the growth of the partial sums over the last two
        decades; it is evidence, not proof. Beta measures, dust measures and
        measures satisfying the dust-integrability assumption get an authoritative verdict.

        Raises:
            IndexRangeError: If k_max < 2.
        """
        pass


class RateService(RateServiceInterface):
    def __init__(self, rate_repository: RateRepositoryInterface):
        self.rate_repository = rate_repository

    def block_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        if k < 2 or not 1 <= j <= k - 1:
            raise IndexRangeError(f"Block-counting rate q_{{{k},{j}}} needs k >= 2 and 1 <= j <= k-1.")
        with ComputationContext("block_rate"):
            return float(self.rate_repository.block_row(k, m)[j - 1])

    def fixation_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        if k < 1 or j <= k:
            raise IndexRangeError(f"Fixation-line rate γ_{{{k},{j}}} needs k >= 1 and j >= k+1.")
        with ComputationContext("fixation_rate"):
            return float(self.rate_repository.fixation_row(k, m, j - k)[-1])

    def quadrature_block_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        if k < 2 or not 1 <= j <= k - 1:
            raise IndexRangeError(f"Block-counting rate q_{{{k},{j}}} needs k >= 2 and 1 <= j <= k-1.")
        with ComputationContext("quadrature_block_rate"):
            alpha, beta = float(k - j - 1), float(j - 1)
            weight = float(np.exp(log_binom(k, j - 1)))
            moment = measures.integrate(lambda u: u ** alpha * (1.0 - u) ** beta, m, tol=1e-12, relative=True)
            return weight * moment

    def quadrature_fixation_rate(self, k: int, j: int, m: MeasureSpec) -> float:
        if k < 1 or j <= k:
            raise IndexRangeError(f"Fixation-line rate γ_{{{k},{j}}} needs k >= 1 and j >= k+1.")
        with ComputationContext("quadrature_fixation_rate"):
            alpha, beta = float(j - k - 1), float(k)
            weight = float(np.exp(log_binom(j, j - k + 1)))
            moment = measures.integrate(lambda u: u ** alpha * (1.0 - u) ** beta, m, tol=1e-12, relative=True)
            return weight * moment

    def has_closed_form(self, m: MeasureSpec) -> bool:
        return measures.is_beta_family(m)

    def block_total_rate(self, k: int, m: MeasureSpec) -> float:
        if k < 2:
            raise IndexRangeError(f"Block-counting rates need k >= 2, got {k}.")
        with ComputationContext("block_total_rate"):
            return self.rate_repository.block_total_rate(k, m)

    def fixation_total_rate(self, k: int, m: MeasureSpec) -> float:
        with ComputationContext("fixation_total_rate"):
            return self.rate_repository.fixation_total_rate(k, m)

    def jump_pmf_block(self, k: int, m: MeasureSpec) -> JumpLaw:
        with ComputationContext("jump_pmf_block"):
            row = self.rate_repository.block_row(k, m)
            total = float(row.sum())
            targets = [(j, float(p)) for j, p in enumerate(row / total, start=1)]
            return JumpLaw(source_state=k, targets=targets, total_rate=total, tail_mass_bound=0.0)

    def jump_pmf_fixation(self, k: int, m: MeasureSpec, tail_tol: Optional[float] = None) -> JumpLaw:
        tail_tol = config['tail_tol'] if tail_tol is None else tail_tol
        if not tail_tol > 0.0:
            raise DomainError(f"tail_tol must be positive, got {tail_tol}.")
        with ComputationContext("jump_pmf_fixation"):
            table = self.rate_repository.fixation_table(k, m, tail_tol)
            targets = [(int(j), float(p)) for j, p in zip(table.targets(), table.rates / table.total_rate)]
            tail = None
            if table.harmonic:
                tail = HarmonicTail(first_target=k + table.rates.size + 1, probability=table.tail_mass)
            return JumpLaw(source_state=k, targets=targets, total_rate=table.total_rate,
                           tail_mass_bound=table.unrepresented_mass, tail=tail)

    def dust_block_rates(self, k: int, params: LimitParams) -> np.ndarray:
        with ComputationContext("dust_block_rates"):
            rates = self.rate_repository.block_row(k, params.measure)
            if params.b == 0.0:
                return rates.copy()
            return rates - params.b * self.rate_repository.block_row(k, LebesgueMeasure())

    def dust_fixation_rates(self, k: int, params: LimitParams, count: int) -> np.ndarray:
        with ComputationContext("dust_fixation_rates"):
            rates = self.rate_repository.fixation_row(k, params.measure, count)
            if params.b == 0.0:
                return rates.copy()
            return rates - params.b * self.rate_repository.fixation_row(k, LebesgueMeasure(), count)

    def cdi_diagnostic(self, m: MeasureSpec, k_max: int) -> CDIReport:
        if k_max < 2:
            raise IndexRangeError(f"The CDI diagnostic needs K >= 2, got {k_max}.")
        with ComputationContext("cdi_diagnostic"):
            try:
                j = np.arange(0, k_max - 1, dtype=float)
                moments = measures.beta_moment(m, np.zeros(j.shape), j)
                k = np.arange(2, k_max + 1, dtype=float)
                eta = k * np.cumsum(moments)
                partial_sums = np.cumsum(1.0 / eta)
                ratio, hint = _decade_verdict(partial_sums)
                authoritative, authority = _authoritative_verdict(m)
            except LambdaOUException as known_exc:
                raise known_exc
            except Exception as e:
                raise NumericalError("An unexpected error occurred while computing the CDI diagnostic.") from e
            logger.debug("cdi K=%d ratio=%s hint=%s authoritative=%s", k_max, ratio, hint, authoritative)
            return CDIReport(eta=eta.tolist(), partial_sums=partial_sums.tolist(), verdict_hint=hint,
                             decade_ratio=ratio, authoritative=authoritative, authority=authority)


def _decade_verdict(partial_sums: np.ndarray) -> Tuple[Optional[float], str]:
    """Ratio of the partial-sum increments over the last two decades of k."""
    k_max = partial_sums.size + 1
    points = [k_max, k_max // 10, k_max // 100]
    if points[-1] < 2:
        return None, "inconclusive"
    s = [partial_sums[p - 2] for p in points]
    later, earlier = s[0] - s[1], s[1] - s[2]
    if earlier <= 0.0:
        return None, "inconclusive"
    ratio = float(later / earlier)
    if ratio < CONVERGES_BELOW:
        return ratio, "converges-evidence"
    if ratio > DIVERGES_ABOVE:
        return ratio, "diverges-evidence"
    return ratio, "inconclusive"


def _authoritative_verdict(m: MeasureSpec) -> Tuple[Optional[str], Optional[str]]:
    if isinstance(m, BetaMeasure):
        if m.a < 1.0:
            return "comes-down", "beta rule: Beta(a,b) comes down from infinity iff 0<a<1"
        return "stays-infinite", "beta rule: Beta(a,b) comes down from infinity iff 0<a<1"
    p = measures.exponent_at_zero(m)
    if p is None or p > 0.0:
        return "stays-infinite", "dust: ∫u^-1 Λ(du) < ∞"
    if p == 0.0:
        b = float(measures.density(m, np.array([0.0]))[0])
        if assumption_a_holds(m, b):
            return "stays-infinite", f"dust-integrability assumption holds with b = {b:.6g}"
    return None, None
