# service/diagnostics_service.py
import logging
import math
from multiprocessing.pool import ThreadPool
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import poisson

from core.exceptions import (CapTooSmallError, DomainError, IndexRangeError, LambdaOUException, NumericalError,
                             TruncationError, UnsupportedRepresentationError)
from core.models import (DiscreteGeneratorTerms, DualityGap, GapTable, LebesgueMeasure, LimitGeneratorTerms,
                         LimitParams, MeasureSpec, MixingKind, MixingLaw, SignedDust, SmoothFunction)
from core.specfun import EULER_GAMMA, harmonic, log_binom
from data import ComputationContext, config
from data import measures
from data.psi_repository import panel_rule
from data.rate_repository import MAX_FIXATION_TARGETS, RateRepositoryInterface, lebesgue_scale, moment_row

logger = logging.getLogger(__name__)

Side = Literal["block", "fixation"]
Representation = Literal["direct", "expectation"]

GENERATOR_PATCH = 1e-3
MIN_EXPLICIT_TARGETS = 1000
TAIL_PANEL = 0.25
TAIL_ORDER = 16
TAIL_DECAY = 40.0
MAX_TAIL_STATE = 1e15
PMF_CHUNK = 4096
UNIFORMIZATION_EPS = 1e-14


def generator_integrands(f: SmoothFunction, x: float, side: Side) -> Tuple[Callable[[float], float],
                                                                           Callable[[float], float]]:
    """(second_order, first_order) integrands of the limit generator at x.

    second_order(u) = (f(x±log(1-u)) - f(x) ± u·f'(x))/u² and first_order(u) = (f(x±log(1-u)) - f(x))/u²,
    with + on the block side. Below GENERATOR_PATCH both switch to their Taylor expansion in u.
    """
    f0, f1, f2, f3 = (float(g(x)) for g in (f.value, f.d1, f.d2, f.d3))
    if side == "block":
        sign = 1.0
        head = ((f2 - f1) / 2.0, -f1 / 3.0 + f2 / 2.0 - f3 / 6.0)
    elif side == "fixation":
        sign = -1.0
        head = ((f1 + f2) / 2.0, f1 / 3.0 + f2 / 2.0 + f3 / 6.0)
    else:
        raise DomainError(f"Unknown side '{side}'.")

    def jump(u):
        with np.errstate(divide="ignore"):
            return float(f.value(x + sign * np.log1p(-u))) - f0

    def second_order(u):
        if u < GENERATOR_PATCH:
            return head[0] + u * head[1]
        return (jump(u) + sign * u * f1) / (u * u)

    def first_order(u):
        if u < GENERATOR_PATCH:
            return -sign * f1 / u + head[0] + u * head[1]
        return jump(u) / (u * u)

    return second_order, first_order


class DiagnosticsServiceInterface:
    def discrete_generator_terms(self, f: SmoothFunction, k: int, x: float, params: LimitParams,
                                 side: Side = "block",
                                 representation: Representation = "direct") -> DiscreteGeneratorTerms:
        """
        Generator of the scaled process log N - e^{-bt}log n (block side) or log L - e^{bt}log n
        (fixation side) at state k, split as A = b·R·f' + b·S_bs + S_dust.

        Args:
            f (SmoothFunction): Test function with analytic derivatives.
            k (int): Current state, k ≥ 2 (block) or k ≥ 1 (fixation).
            x (float): Evaluation point.
            params (LimitParams): b and the driving measure.
            side (str): ``block`` or ``fixation``.
            representation (str): ``direct`` sums the rates; ``expectation`` evaluates the block-side
                sums as expectations over the mixed binomial laws.

        Returns:
            DiscreteGeneratorTerms: R, S_bs, S_dust and their assembly.

        Raises:
            IndexRangeError: If k is below the side's minimum.
            UnsupportedRepresentationError: For the expectation representation on the fixation side.
        """
        pass

    def fixation_generator_terms(self, f: SmoothFunction, k: int, y: float,
                                 params: LimitParams) -> DiscreteGeneratorTerms:
        """
        ``discrete_generator_terms`` on the fixation side.
        """
        pass

    def limit_generator_terms(self, f: SmoothFunction, x: float, params: LimitParams,
                              side: Side = "block") -> LimitGeneratorTerms:
        """
        Generator of the limit process split as drift + b·I_bs + I_dust, where the drift is
        b(1+Ψ(1)-x)f'(x) (block) or b(-1-Ψ(1)+x)f'(x) (fixation).

        Returns:
            LimitGeneratorTerms: drift, I_bs, I_dust and A_limit.
        """
        pass

    def fixation_limit_generator_terms(self, f: SmoothFunction, y: float,
                                       params: LimitParams) -> LimitGeneratorTerms:
        """
        ``limit_generator_terms`` on the fixation side.
        """
        pass

    def generator_gap_table(self, f: SmoothFunction, params: LimitParams, k_list: Sequence[int],
                            x_grid: Sequence[float], side: Side = "block",
                            representation: Representation = "direct") -> GapTable:
        """
        |A_discrete(k, x) - A_limit(x)| on a (k, x) grid.

        Returns:
            GapTable: One row of gaps per k and the row suprema.

        Raises:
            DataValidationError: If k_list is not strictly increasing.
        """
        pass

    def mixing_pmf(self, kind: MixingKind, k: int, m: MeasureSpec, tail_tol: Optional[float] = None) -> MixingLaw:
        """
        Mixed binomial and negative binomial laws behind the generator sums.

        Args:
            kind (str): ``dust-binomial`` (sample size k-1, success rate u^{-1}Λ/c),
                ``bs-binomial`` (sample size k-2, success rate Λ/Λ([0,1])),
                ``fixation-negbinomial-lambda`` (support j ≥ 1) or ``fixation-negbinomial-dust``
                (support j ≥ 0).
            k (int): State.
            m (MeasureSpec): Mixing measure.
            tail_tol (float): Probability left out of the negative binomial kinds.

        Returns:
            MixingLaw: pmf plus the omitted tail mass, which together sum to 1.

        Raises:
            IndexRangeError: If k is too small for the kind.
            TruncationError: If 10^6 terms do not reach tail_tol.
        """
        pass

    def duality_gap_exact(self, n: int, m0: int, t: float, m: MeasureSpec, cap: int,
                          tol: Optional[float] = None) -> DualityGap:
        """
        Both sides of P(L_t^(m0) ≥ n) = P(N_t^(n) ≤ m0) by uniformization.

        The block side runs on {1..n}. The fixation side runs on {m0..cap} plus an absorbing
        overflow state, which brackets its probability in an interval of width truncation_bound.

        Raises:
            DomainError: If cap <= max(n, m0) or t < 0.
            CapTooSmallError: If tol is given and truncation_bound exceeds it.
        """
        pass


class DiagnosticsService(DiagnosticsServiceInterface):
    def __init__(self, rate_repository: RateRepositoryInterface, threads: Optional[int] = None):
        self.rate_repository = rate_repository
        self.threads = threads or config['threads']

    # Discrete generator

    def discrete_generator_terms(self, f: SmoothFunction, k: int, x: float, params: LimitParams,
                                 side: Side = "block",
                                 representation: Representation = "direct") -> DiscreteGeneratorTerms:
        with ComputationContext("discrete_generator_terms"):
            R, S_bs, S_dust = self._discrete_terms(f, k, np.array([float(x)]), params, side, representation)
            f1 = float(f.d1(x))
            return DiscreteGeneratorTerms(k=k, x=x, R=float(R[0]), S_bs=float(S_bs[0]), S_dust=float(S_dust[0]),
                                          A_discrete=float(params.b * R[0] * f1 + params.b * S_bs[0] + S_dust[0]))

    def fixation_generator_terms(self, f: SmoothFunction, k: int, y: float,
                                 params: LimitParams) -> DiscreteGeneratorTerms:
        return self.discrete_generator_terms(f, k, y, params, side="fixation")

    def _discrete_terms(self, f: SmoothFunction, k: int, xs: np.ndarray, params: LimitParams, side: Side,
                        representation: Representation) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        try:
            if side == "block":
                if k < 2:
                    raise IndexRangeError(f"The block-side generator needs k >= 2, got {k}.")
                R = math.log(k) - (harmonic(k) - 1.0) - xs
                if representation == "expectation":
                    return R, self._expected_bs_sum(f, k, xs), self._expected_dust_sum(f, k, xs, params)
                if representation != "direct":
                    raise DomainError(f"Unknown representation '{representation}'.")
                return R, *self._block_sums(f, k, xs, params)
            if side == "fixation":
                if k < 1:
                    raise IndexRangeError(f"The fixation-side generator needs k >= 1, got {k}.")
                if representation != "direct":
                    raise UnsupportedRepresentationError("The fixation side is evaluated by direct summation only.")
                # Σ_{j≤k}(j/k)γ^λ_{k,k+j} = H_{k+1} - 1
                R = -math.log(k) + xs + harmonic(k + 1) - 1.0
                return R, *self._fixation_sums(f, k, xs, params)
            raise DomainError(f"Unknown side '{side}'.")
        except LambdaOUException as known_exc:
            raise known_exc
        except Exception as e:
            raise NumericalError("An unexpected error occurred while evaluating the discrete generator.") from e

    def _block_sums(self, f: SmoothFunction, k: int, xs: np.ndarray,
                    params: LimitParams) -> Tuple[np.ndarray, np.ndarray]:
        j = np.arange(1, k, dtype=float)
        f0, f1 = f.value(xs), f.d1(xs)
        jumps = f.value(xs[:, None] + np.log(j / k)) - f0[:, None]
        q_bs = self.rate_repository.block_row(k, LebesgueMeasure())
        S_bs = (jumps + np.outer(f1, (k - j) / k)) @ q_bs
        q_dust = self.rate_repository.block_row(k, params.measure)
        if params.b != 0.0:
            q_dust = q_dust - params.b * q_bs
        return S_bs, jumps @ q_dust

    def _expected_bs_sum(self, f: SmoothFunction, k: int, xs: np.ndarray) -> np.ndarray:
        law = self._pmf("bs-binomial", k, LebesgueMeasure(), 0.0)
        z = np.array([j for j, _ in law.pmf], dtype=float)
        p = np.array([w for _, w in law.pmf])
        weights = (1.0 - 1.0 / k) * (1.0 - 1.0 / (z + 2.0)) * p
        return _second_order_h(f, (z + 1.0) / k, xs) @ weights

    def _expected_dust_sum(self, f: SmoothFunction, k: int, xs: np.ndarray, params: LimitParams) -> np.ndarray:
        if params.b == 0.0:
            parts = [(1.0, params.measure)]
        else:
            dust = measures.dust_decompose(params.measure, params.b)
            parts = [(1.0, dust.plus), (-1.0, dust.minus)]
        total = np.zeros(xs.shape)
        for sign, part in parts:
            c = float(measures.beta_moment(part, -1.0, 0.0))
            if c == 0.0:
                continue
            law = self._pmf("dust-binomial", k, part, 0.0)
            z = np.array([j for j, _ in law.pmf], dtype=float)
            p = np.array([w for _, w in law.pmf])
            total += sign * c * (_first_order_h(f, z / k, xs) @ ((1.0 - 1.0 / (z + 1.0)) * p))
        return total

    def _fixation_sums(self, f: SmoothFunction, k: int, ys: np.ndarray,
                       params: LimitParams) -> Tuple[np.ndarray, np.ndarray]:
        lebesgue = LebesgueMeasure()
        jumps_bs = self._fixation_jump_sum(f, k, ys, lebesgue)
        s = np.arange(1, k + 1, dtype=float)
        compensator = float(np.sum(s / k * self.rate_repository.fixation_row(k, lebesgue, k)))
        S_bs = jumps_bs - compensator * f.d1(ys)
        S_dust = self._fixation_jump_sum(f, k, ys, params.measure)
        if params.b != 0.0:
            S_dust = S_dust - params.b * jumps_bs
        return S_bs, S_dust

    def _fixation_jump_sum(self, f: SmoothFunction, k: int, ys: np.ndarray, measure: MeasureSpec) -> np.ndarray:
        """Σ_{s≥1}(f(y + log(1+s/k)) - f(y))γ_{k,k+s}; targets past max(4k, 1000) as an integral in v = log(1+s/k)."""
        explicit = max(4 * k, MIN_EXPLICIT_TARGETS)
        f0 = f.value(ys)
        s = np.arange(1, explicit + 1, dtype=float)
        rates = self.rate_repository.fixation_row(k, measure, explicit)
        head = (f.value(ys[:, None] + np.log1p(s / k)) - f0[:, None]) @ rates

        q = measures.exponent_at_one(measure)
        decay = 1.0 + (0.0 if q is None else q)
        v0 = math.log1p((explicit + 0.5) / k)
        v1 = min(v0 + TAIL_DECAY / decay, math.log1p(MAX_TAIL_STATE / k))
        if v1 <= v0:
            return head
        edges = np.linspace(v0, v1, max(1, int(math.ceil((v1 - v0) / TAIL_PANEL))) + 1)
        v, weights = panel_rule(edges, TAIL_ORDER)
        s_cont = k * np.expm1(v)
        density = _fixation_rate_density(k, measure, s_cont) * k * np.exp(v)
        tail = (f.value(ys[:, None] + v) - f0[:, None]) @ (weights * density)
        return head + tail

    # Limit generator

    def limit_generator_terms(self, f: SmoothFunction, x: float, params: LimitParams,
                              side: Side = "block") -> LimitGeneratorTerms:
        with ComputationContext("limit_generator_terms"):
            return self._limit_terms(f, x, params, self._dust(params), side)

    def fixation_limit_generator_terms(self, f: SmoothFunction, y: float,
                                       params: LimitParams) -> LimitGeneratorTerms:
        return self.limit_generator_terms(f, y, params, side="fixation")

    @staticmethod
    def _dust(params: LimitParams) -> Optional[SignedDust]:
        return None if params.b == 0.0 else measures.dust_decompose(params.measure, params.b)

    def _limit_terms(self, f: SmoothFunction, x: float, params: LimitParams, dust: Optional[SignedDust],
                     side: Side) -> LimitGeneratorTerms:
        try:
            second_order, first_order = generator_integrands(f, x, side)
            f1 = float(f.d1(x))
            if side == "block":
                drift = params.b * (1.0 - EULER_GAMMA - x) * f1
            else:
                drift = params.b * (-1.0 + EULER_GAMMA + x) * f1
            I_bs = measures.integrate(second_order, LebesgueMeasure()) if params.b != 0.0 else 0.0
            if dust is None:
                I_dust = measures.integrate(first_order, params.measure, f_exponent_zero=-1.0)
            else:
                I_dust = measures.integrate_signed(first_order, dust, f_exponent_zero=-1.0)
            return LimitGeneratorTerms(x=x, drift=drift, I_bs=I_bs, I_dust=I_dust,
                                       A_limit=drift + params.b * I_bs + I_dust)
        except LambdaOUException as known_exc:
            raise known_exc
        except Exception as e:
            raise NumericalError("An unexpected error occurred while evaluating the limit generator.") from e

    def generator_gap_table(self, f: SmoothFunction, params: LimitParams, k_list: Sequence[int],
                            x_grid: Sequence[float], side: Side = "block",
                            representation: Representation = "direct") -> GapTable:
        k_list = [int(k) for k in k_list]
        xs = np.asarray(x_grid, dtype=float)
        with ComputationContext("generator_gap_table"):
            dust = self._dust(params)

            def limit_cell(x: float) -> float:
                with ComputationContext("limit_cell"):
                    return self._limit_terms(f, x, params, dust, side).A_limit

            def discrete_row(k: int) -> np.ndarray:
                with ComputationContext("discrete_row"):
                    R, S_bs, S_dust = self._discrete_terms(f, k, xs, params, side, representation)
                    return params.b * R * f.d1(xs) + params.b * S_bs + S_dust

            if self.threads == 1:
                limit = np.array([limit_cell(float(x)) for x in xs])
                rows = [discrete_row(k) for k in k_list]
            else:
                with ThreadPool(self.threads) as pool:
                    limit = np.array(pool.map(limit_cell, [float(x) for x in xs]))
                    rows = pool.map(discrete_row, k_list)
            gaps = [np.abs(row - limit) for row in rows]
            sup = [float(g.max()) if g.size else 0.0 for g in gaps]
            logger.debug("gap table side=%s k=%s sup=%s", side, k_list, sup)
            return GapTable(side=side, k_list=k_list, x_grid=xs.tolist(), gaps=[g.tolist() for g in gaps],
                            sup_per_k=sup)

    # Mixing laws

    def mixing_pmf(self, kind: MixingKind, k: int, m: MeasureSpec, tail_tol: Optional[float] = None) -> MixingLaw:
        tail_tol = config['tail_tol'] if tail_tol is None else tail_tol
        with ComputationContext("mixing_pmf"):
            try:
                return self._pmf(kind, k, m, tail_tol)
            except LambdaOUException as known_exc:
                raise known_exc
            except Exception as e:
                raise NumericalError("An unexpected error occurred while computing a mixing law.") from e

    def _pmf(self, kind: MixingKind, k: int, m: MeasureSpec, tail_tol: float) -> MixingLaw:
        if kind == "dust-binomial":
            if k < 2:
                raise IndexRangeError("The dust-binomial law needs k >= 2.")
            c = float(measures.beta_moment(m, -1.0, 0.0))
            j = np.arange(0, k, dtype=float)
            pmf = moment_row(m, j - 1.0, k - 1.0 - j, log_binom(k - 1.0, j)) / c
            return MixingLaw(kind=kind, k=k, pmf=list(zip(range(k), pmf.tolist())))
        if kind == "bs-binomial":
            if k < 2:
                raise IndexRangeError("The bs-binomial law needs k >= 2.")
            c = measures.total_mass(m)
            j = np.arange(0, k - 1, dtype=float)
            pmf = moment_row(m, j, k - 2.0 - j, log_binom(k - 2.0, j)) / c
            return MixingLaw(kind=kind, k=k, pmf=list(zip(range(k - 1), pmf.tolist())))
        if kind == "fixation-negbinomial-lambda":
            if k < 1:
                raise IndexRangeError("The fixation negative binomial laws need k >= 1.")
            c = measures.total_mass(m)
            return self._negative_binomial(kind, k, 1, tail_tol,
                                           lambda j: moment_row(m, j - 1.0, np.full(j.shape, float(k)),
                                                                log_binom(k + j - 2.0, j - 1.0)) / c)
        if kind == "fixation-negbinomial-dust":
            if k < 1:
                raise IndexRangeError("The fixation negative binomial laws need k >= 1.")
            c = float(measures.beta_moment(m, -1.0, 0.0))
            return self._negative_binomial(kind, k, 0, tail_tol,
                                           lambda j: moment_row(m, j - 1.0, np.full(j.shape, float(k)),
                                                                log_binom(k + j - 1.0, j)) / c)
        raise DomainError(f"Unknown mixing law '{kind}'.")

    @staticmethod
    def _negative_binomial(kind: MixingKind, k: int, first: int, tail_tol: float, chunk_pmf) -> MixingLaw:
        pieces: List[np.ndarray] = []
        covered = 0.0
        start = first
        while True:
            if start - first >= MAX_FIXATION_TARGETS:
                raise TruncationError(f"{kind} law at k={k}: tail {1.0 - covered:.3g} after "
                                      f"{MAX_FIXATION_TARGETS} terms exceeds {tail_tol:.3g}.")
            stop = min(start + PMF_CHUNK, first + MAX_FIXATION_TARGETS)
            chunk = chunk_pmf(np.arange(start, stop, dtype=float))
            pieces.append(chunk)
            covered += float(chunk.sum())
            start = stop
            if 1.0 - covered <= tail_tol:
                break
        pmf = np.concatenate(pieces)
        cumulative = np.cumsum(pmf)
        # shortest prefix that meets the tolerance
        meets = np.flatnonzero(1.0 - cumulative <= tail_tol)
        used = int(meets[0]) + 1 if meets.size else pmf.size
        pmf = pmf[:used]
        return MixingLaw(kind=kind, k=k, pmf=list(zip(range(first, first + used), pmf.tolist())),
                         tail_mass=max(0.0, 1.0 - float(cumulative[used - 1])))

    # Exact duality

    def duality_gap_exact(self, n: int, m0: int, t: float, m: MeasureSpec, cap: int,
                          tol: Optional[float] = None) -> DualityGap:
        if n < 1 or m0 < 1:
            raise DomainError("n and m0 must be positive.")
        if cap <= max(n, m0):
            raise DomainError(f"cap {cap} must exceed max(n, m0) = {max(n, m0)}.")
        if t < 0.0 or not math.isfinite(t):
            raise DomainError("t must be finite and nonnegative.")
        with ComputationContext("duality_gap_exact"):
            try:
                block, eps_block = _uniformized(self._block_generator(n, m), n - 1, t)
                rhs = float(block[:m0].sum())
                fixation, eps_fix = _uniformized(self._fixation_generator(m0, m, cap), 0, t)
                states = np.arange(m0, cap + 1)
                inside = float(fixation[:-1][states >= n].sum())
                overflow = float(fixation[-1])
            except LambdaOUException as known_exc:
                raise known_exc
            except Exception as e:
                raise NumericalError("An unexpected error occurred while uniformizing the duality chains.") from e
            eps = eps_block + eps_fix
            lower, upper = inside - eps, inside + overflow + eps
            gap = max(0.0, lower - rhs, rhs - upper)
            bound = upper - lower
            logger.debug("duality n=%d m0=%d t=%s rhs=%.12g lhs=[%.12g, %.12g] overflow=%.3g", n, m0, t, rhs,
                         lower, upper, overflow)
            if tol is not None and bound > tol:
                raise CapTooSmallError(f"Truncation bound {bound:.3g} at cap {cap} exceeds {tol:.3g}.")
            return DualityGap(n=n, m0=m0, t=t, lhs_lower=lower, lhs_upper=upper, rhs=rhs, gap=gap,
                              truncation_bound=bound, overflow_probability=overflow)

    def _block_generator(self, n: int, m: MeasureSpec) -> np.ndarray:
        """Generator on states 1..n (index k-1)."""
        Q = np.zeros((n, n))
        for k in range(2, n + 1):
            row = self.rate_repository.block_row(k, m)
            Q[k - 1, :k - 1] = row
            Q[k - 1, k - 1] = -row.sum()
        return Q

    def _fixation_generator(self, m0: int, m: MeasureSpec, cap: int) -> np.ndarray:
        """Generator on states m0..cap followed by an absorbing overflow state."""
        size = cap - m0 + 2
        Q = np.zeros((size, size))
        for k in range(m0, cap + 1):
            i = k - m0
            row = self.rate_repository.fixation_row(k, m, cap - k)
            total = self.rate_repository.fixation_total_rate(k, m)
            Q[i, i + 1:size - 1] = row
            Q[i, -1] = max(0.0, total - float(row.sum()))
            Q[i, i] = -total
        return Q


def _uniformized(Q: np.ndarray, start: int, t: float) -> Tuple[np.ndarray, float]:
    """Row start of exp(tQ) by uniformization, and the Poisson mass left out."""
    p = np.zeros(Q.shape[0])
    p[start] = 1.0
    rate = float(np.max(-np.diag(Q)))
    if t == 0.0 or rate == 0.0:
        return p, 0.0
    mean = rate * t
    P = np.eye(Q.shape[0]) + Q / rate
    depth = int(poisson.isf(UNIFORMIZATION_EPS, mean)) + 1
    weights = poisson.pmf(np.arange(depth + 1), mean)
    out = weights[0] * p
    for w in weights[1:]:
        p = p @ P
        out += w * p
    return out, float(poisson.sf(depth, mean))


def _fixation_rate_density(k: int, measure: MeasureSpec, s: np.ndarray) -> np.ndarray:
    """γ_{k,k+s} continued to real s."""
    scale = lebesgue_scale(measure)
    if scale is not None:
        return scale * k / (s * (s + 1.0))
    return moment_row(measure, s - 1.0, np.full(s.shape, float(k)), log_binom(k + s, s + 1.0))


def _first_order_h(f: SmoothFunction, u: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """h(u, x) = (f(x + log(1-u)) - f(x))/u with h(0, x) = -f'(x); rows over x."""
    f0 = f.value(xs)[:, None]
    safe = np.where(u == 0.0, 1.0, u)
    values = (f.value(xs[:, None] + np.log1p(-safe)) - f0) / safe
    return np.where(u == 0.0, -f.d1(xs)[:, None], values)


def _second_order_h(f: SmoothFunction, u: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """h₂(u, x) = (f(x + log(1-u)) - f(x) + u·f'(x))/u² with h₂(0, x) = (f''(x) - f'(x))/2."""
    f0, f1 = f.value(xs)[:, None], f.d1(xs)[:, None]
    safe = np.where(u == 0.0, 1.0, u)
    values = (f.value(xs[:, None] + np.log1p(-safe)) - f0 + safe * f1) / (safe * safe)
    return np.where(u == 0.0, ((f.d2(xs) - f.d1(xs)) / 2.0)[:, None], values)
