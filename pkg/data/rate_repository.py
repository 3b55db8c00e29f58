import logging
import math
import threading
from collections import OrderedDict
from typing import Optional, Tuple

import numpy as np

from core.exceptions import IndexRangeError, TruncationError
from core.models import MeasureSpec
from core.specfun import log_binom
from data import config
from data.measures import beta_moment, is_beta_family, log_beta_moment, measure_key

logger = logging.getLogger(__name__)

MAX_FIXATION_TARGETS = 10 ** 6
HARMONIC_HEAD = 4096


def lebesgue_scale(measure) -> Optional[float]:
    """c when the measure is exactly c·λ."""
    if measure.kind == "lebesgue":
        return measure.c
    if measure.kind == "beta" and measure.a == 1.0 and measure.b == 1.0:
        return 1.0
    return None


def moment_row(measure, alpha: np.ndarray, beta: np.ndarray, log_weight: np.ndarray) -> np.ndarray:
    """exp(log_weight) · ∫u^alpha (1-u)^beta Λ(du), elementwise."""
    if is_beta_family(measure):
        return np.exp(log_weight + log_beta_moment(measure, alpha, beta))
    return np.exp(log_weight) * beta_moment(measure, alpha, beta)


def compute_block_row(k: int, measure) -> np.ndarray:
    """q_{k,j} for j = 1..k-1."""
    j = np.arange(1, k, dtype=float)
    scale = lebesgue_scale(measure)
    if scale is not None:
        return scale * k / ((k - j) * (k - j + 1.0))
    return moment_row(measure, k - j - 1.0, j - 1.0, log_binom(k, j - 1.0))


def compute_fixation_row(k: int, measure, start: int, stop: int) -> np.ndarray:
    """γ_{k,k+s} for s = start..stop-1 (start ≥ 1)."""
    s = np.arange(start, stop, dtype=float)
    scale = lebesgue_scale(measure)
    if scale is not None:
        return scale * k / (s * (s + 1.0))
    return moment_row(measure, s - 1.0, np.full(s.shape, float(k)), log_binom(k + s, s + 1.0))


def compute_fixation_total_rate(k: int, measure) -> float:
    """Σ_j γ_{k,j} = Σ_{s<k} (s+1)∫(1-u)^s Λ(du)."""
    scale = lebesgue_scale(measure)
    if scale is not None:
        return scale * k
    s = np.arange(0, k, dtype=float)
    return float(np.sum(moment_row(measure, np.zeros(s.shape), s, np.log(s + 1.0))))


class AliasTable:
    """Walker/Vose alias table for O(1) categorical draws."""

    def __init__(self, probabilities: np.ndarray):
        p = np.asarray(probabilities, dtype=float)
        n = p.size
        scaled = p * n / p.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        self.size = n

    def sample(self, rng: np.random.Generator, size=None):
        index = rng.integers(0, self.size, size=size)
        accept = rng.random(size=size) < self.prob[index]
        return np.where(accept, index, self.alias[index])


class FixationTable:
    """Truncated fixation-line jump law from one state.

    With ``harmonic`` set the rates are c·k/(s(s+1)) and the untabulated
    steps s > S follow the closed form: their mass is c·k/(S+1) and
    P(step ≥ m | step > S) = (S+1)/m.
    """

    def __init__(self, k: int, rates: np.ndarray, total_rate: float, harmonic: bool = False):
        self.k = k
        self.rates = rates
        self.total_rate = total_rate
        self.harmonic = harmonic
        if harmonic:
            self.tail_mass = 1.0 / (rates.size + 1.0)
        else:
            self.tail_mass = max(0.0, 1.0 - float(rates.sum()) / total_rate)
        self.alias = AliasTable(rates)

    @property
    def unrepresented_mass(self) -> float:
        """Probability of targets described neither by the table nor by a closed form."""
        return 0.0 if self.harmonic else self.tail_mass

    def targets(self) -> np.ndarray:
        return self.k + np.arange(1, self.rates.size + 1)

    def sample_tail_step(self, rng: np.random.Generator) -> int:
        """Exact step s > S from the harmonic tail, by inversion."""
        u = 1.0 - rng.random()
        return int(math.floor((self.rates.size + 1.0) / u))


class RateRepositoryInterface:

    def block_row(self, k: int, measure: MeasureSpec) -> np.ndarray:
        # Rates q_{k,1..k-1}
        pass

    def block_total_rate(self, k: int, measure: MeasureSpec) -> float:
        # Σ_j q_{k,j}
        pass

    def fixation_row(self, k: int, measure: MeasureSpec, count: int) -> np.ndarray:
        # Rates γ_{k,k+1..k+count}
        pass

    def fixation_total_rate(self, k: int, measure: MeasureSpec) -> float:
        # Σ_j γ_{k,j}
        pass

    def block_alias(self, k: int, measure: MeasureSpec) -> AliasTable:
        # Alias table of the block-counting jump law from k
        pass

    def fixation_table(self, k: int, measure: MeasureSpec, tail_tol: float) -> FixationTable:
        # Truncated fixation-line jump law from k
        pass


class CachedRateRepository(RateRepositoryInterface):
    """Rate rows memoized in a bounded LRU shared by all threads."""

    def __init__(self, cache_size: Optional[int] = None):
        self.cache_size = cache_size or config['cache_size']
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def _cached(self, key: Tuple, build):
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        value = build()
        with self._lock:
            self._cache[key] = value
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return value

    def block_row(self, k: int, measure: MeasureSpec) -> np.ndarray:
        if k < 2:
            raise IndexRangeError(f"Block-counting rates need k >= 2, got {k}.")
        return self._cached(("block", measure_key(measure), k), lambda: compute_block_row(k, measure))

    def block_total_rate(self, k: int, measure: MeasureSpec) -> float:
        return float(self.block_row(k, measure).sum())

    def fixation_row(self, k: int, measure: MeasureSpec, count: int) -> np.ndarray:
        if k < 1:
            raise IndexRangeError(f"Fixation-line rates need k >= 1, got {k}.")
        return self._cached(("fixation", measure_key(measure), k, count),
                            lambda: compute_fixation_row(k, measure, 1, count + 1))

    def fixation_total_rate(self, k: int, measure: MeasureSpec) -> float:
        if k < 1:
            raise IndexRangeError(f"Fixation-line rates need k >= 1, got {k}.")
        return self._cached(("fixation-total", measure_key(measure), k),
                            lambda: compute_fixation_total_rate(k, measure))

    def block_alias(self, k: int, measure: MeasureSpec) -> AliasTable:
        return self._cached(("block-alias", measure_key(measure), k), lambda: AliasTable(self.block_row(k, measure)))

    def fixation_table(self, k: int, measure: MeasureSpec, tail_tol: float) -> FixationTable:
        return self._cached(("fixation-table", measure_key(measure), k, tail_tol),
                            lambda: self._build_fixation_table(k, measure, tail_tol))

    def _build_fixation_table(self, k: int, measure: MeasureSpec, tail_tol: float) -> FixationTable:
        total = self.fixation_total_rate(k, measure)
        if lebesgue_scale(measure) is not None:
            # the tail beyond S targets is c·k/(S+1) and is sampled in closed form
            count = int(min(HARMONIC_HEAD, max(1.0, math.ceil(1.0 / tail_tol) - 1.0)))
            rates = compute_fixation_row(k, measure, 1, count + 1)
            logger.debug("fixation table k=%d targets=%d harmonic tail", k, count)
            return FixationTable(k, rates, total, harmonic=True)
        chunks = []
        covered = 0.0
        count = 0
        chunk = 64
        while True:
            stop = min(count + chunk, MAX_FIXATION_TARGETS)
            row = compute_fixation_row(k, measure, count + 1, stop + 1)
            cumulative = covered + np.cumsum(row)
            done = np.flatnonzero(total - cumulative <= tail_tol * total)
            if done.size:
                chunks.append(row[:done[0] + 1])
                count += done[0] + 1
                break
            chunks.append(row)
            covered = float(cumulative[-1])
            count = stop
            if count >= MAX_FIXATION_TARGETS:
                raise TruncationError(
                    f"Fixation law from k={k} keeps relative mass {(total - covered) / total:.3g} "
                    f"after {MAX_FIXATION_TARGETS} targets (tolerance {tail_tol:.3g}).")
            chunk *= 2
        rates = np.concatenate(chunks)
        logger.debug("fixation table k=%d targets=%d", k, count)
        return FixationTable(k, rates, total)
