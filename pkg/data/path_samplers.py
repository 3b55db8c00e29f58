"""Exact samplers for the block counting process and the fixation line.

``PoissonMergerSampler`` realises the Poisson construction of the coalescent
for measures built from beta-type components and atoms. Merger points (t, u)
arrive with intensity dt ⊗ u^{-2}Λ(du); the u-axis is cut into dyadic tiers
[2^{-i-1}, 2^{-i}) where u^{-2} ≤ 4^{i+1}, and below ε ≈ √2/k the proposal
is a size-biased "pair" event with intensity binom(k,2)Λ(du) (block counting)
or k(k+1)/2·(1-ε)^{-2}Λ(du) (fixation line). Whole batches of replicates
advance together, one proposal per replicate and step, and every replicate
draws from its own stream.

``TableSampler`` is the Gillespie scheme over cached jump laws and works for
every measure.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core.exceptions import DomainError
from core.models import MeasureSpec
from data.measures import atoms, beta_components
from data.rate_repository import RateRepositoryInterface

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
MAX_U = 1.0 - 2.0 ** -52


class BatchResult:
    """States read off at the query times for one batch of replicates."""

    def __init__(self, states: np.ndarray, capped: np.ndarray, events: Optional[List[Tuple[list, list]]] = None):
        self.states = states
        self.capped = capped
        self.events = events


class ReplicateStreams:
    """One generator per replicate of a batch.

    A vectorised draw takes exactly one variate from the stream of each listed
    row, so a replicate's path depends only on its own stream.
    """

    def __init__(self, generators: Sequence[np.random.Generator]):
        self.generators = list(generators)

    def __len__(self) -> int:
        return len(self.generators)

    def random(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].random() for r in rows.tolist()], dtype=float)

    def standard_exponential(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].standard_exponential() for r in rows.tolist()], dtype=float)

    def binomial(self, rows: np.ndarray, n: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].binomial(ni, pi)
                         for r, ni, pi in zip(rows.tolist(), n.tolist(), p.tolist())], dtype=np.int64)

    def negative_binomial(self, rows: np.ndarray, n: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].negative_binomial(ni, pi)
                         for r, ni, pi in zip(rows.tolist(), n.tolist(), p.tolist())], dtype=np.int64)

    def gamma(self, rows: np.ndarray, shape: np.ndarray, scale: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].gamma(k, s)
                         for r, k, s in zip(rows.tolist(), shape.tolist(), scale.tolist())], dtype=float)

    def poisson(self, rows: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return np.array([self.generators[r].poisson(mu) for r, mu in zip(rows.tolist(), lam.tolist())],
                        dtype=np.int64)


class _Recorder:
    """Right-continuous readout of batch paths at sorted query times."""

    def __init__(self, start: np.ndarray, times: Sequence[float], record_events: bool):
        self.times = np.asarray(times, dtype=float)
        size, count = start.size, self.times.size
        self.states = np.zeros((size, count), dtype=np.int64)
        self.capped = np.zeros((size, count), dtype=bool)
        self.next_query = np.zeros(size, dtype=np.int64)
        self.events = [([0.0], [int(s)]) for s in start] if record_events else None

    @property
    def horizon(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0

    def settle(self, index: np.ndarray, next_time: np.ndarray, state: np.ndarray, capped: np.ndarray):
        """Records the current state at every query time passed before next_time."""
        count = self.times.size
        while True:
            pending = self.next_query[index] < count
            due = np.zeros(index.size, dtype=bool)
            due[pending] = next_time[pending] > self.times[self.next_query[index[pending]]]
            if not due.any():
                break
            rows = index[due]
            self.states[rows, self.next_query[rows]] = state[due]
            self.capped[rows, self.next_query[rows]] = capped[due]
            self.next_query[rows] += 1

    def done(self, index: np.ndarray) -> np.ndarray:
        return self.next_query[index] >= self.times.size

    def jumped(self, index: np.ndarray, when: np.ndarray, state: np.ndarray):
        if self.events is None:
            return
        for row, t, s in zip(index.tolist(), when.tolist(), state.tolist()):
            if t <= self.horizon:
                self.events[row][0].append(t)
                self.events[row][1].append(s)

    def result(self) -> BatchResult:
        return BatchResult(self.states, self.capped, self.events)


class DyadicEnvelope:
    """Tier masses of Λ on the dyadic grid, computed once per measure."""

    def __init__(self, measure: MeasureSpec, depth: int):
        components = beta_components(measure)
        self.weight = np.array([c[0] for c in components], dtype=float)
        self.a = np.array([c[1] for c in components], dtype=float)
        self.b = np.array([c[2] for c in components], dtype=float)
        atom_list = atoms(measure)
        self.atom_location = np.array([loc for loc, _ in atom_list], dtype=float)
        atom_mass = np.array([mass for _, mass in atom_list], dtype=float)
        self.n_beta = self.weight.size
        self.depth = depth

        upper = 2.0 ** -np.arange(depth)
        self.tier_lower = upper / 2.0
        self.tier_cdf_lo = special.betainc(self.a, self.b, self.tier_lower[:, None])
        self.tier_cdf_hi = special.betainc(self.a, self.b, upper[:, None])
        in_tier = (self.atom_location >= self.tier_lower[:, None]) & (self.atom_location < upper[:, None])
        self.tier_mass = np.concatenate([self.weight * (self.tier_cdf_hi - self.tier_cdf_lo),
                                         atom_mass * in_tier], axis=1)
        tier_rate = 4.0 ** (np.arange(depth) + 1.0) * self.tier_mass.sum(axis=1)
        self.cum_tier_rate = np.concatenate([[0.0], np.cumsum(tier_rate)])

        self.eps = 2.0 ** -np.arange(depth + 1)
        self.low_cdf = special.betainc(self.a, self.b, self.eps[:, None])
        self.low_mass = np.concatenate([self.weight * self.low_cdf,
                                        atom_mass * (self.atom_location < self.eps[:, None])], axis=1)
        self.low_total = self.low_mass.sum(axis=1)

    def level(self, k: np.ndarray) -> np.ndarray:
        """L with ε = 2^{-L} the largest dyadic value ≤ min(√2/k, 1/2)."""
        raw = np.ceil(np.log2(k / SQRT2))
        return np.clip(raw, 1, self.depth).astype(np.int64)

    def draw(self, streams: ReplicateStreams, rows: np.ndarray, level: np.ndarray, low_rate: np.ndarray
             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One proposal per replicate: (is_low, tier, u)."""
        size = level.size
        total = low_rate + self.cum_tier_rate[level]
        v = streams.random(rows) * total
        is_low = v < low_rate
        tier = np.searchsorted(self.cum_tier_rate, v - low_rate, side="right") - 1
        tier = np.clip(tier, 0, np.maximum(level - 1, 0))
        rows = np.where(is_low[:, None], self.low_mass[level], self.tier_mass[tier])
        cumulative = np.cumsum(rows, axis=1)
        pick = streams.random(rows) * cumulative[:, -1]
        component = np.minimum((cumulative <= pick[:, None]).sum(axis=1), rows.shape[1] - 1)
        spread = streams.random(rows)
        u = np.zeros(size)
        is_beta = component < self.n_beta
        if self.n_beta:
            c = np.minimum(component, self.n_beta - 1)
            lo = np.where(is_low, 0.0, self.tier_cdf_lo[tier, c])
            hi = np.where(is_low, self.low_cdf[level, c], self.tier_cdf_hi[tier, c])
            u = np.where(is_beta, special.betaincinv(self.a[c], self.b[c], lo + spread * (hi - lo)), u)
        if self.atom_location.size:
            a_index = np.clip(component - self.n_beta, 0, self.atom_location.size - 1)
            u = np.where(is_beta, u, self.atom_location[a_index])
        upper = np.where(is_low, self.eps[level], 2.0 * self.tier_lower[tier])
        lower = np.where(is_low, 0.0, self.tier_lower[tier])
        return is_low, tier, np.clip(u, lower, np.minimum(upper, MAX_U))


def depth_for(max_state: int) -> int:
    return max(1, int(math.ceil(math.log2(max(max_state, 2) / SQRT2)))) + 1


class PoissonMergerSampler:
    """Batch sampler for beta-type measures by thinning of the merger point process."""

    def __init__(self, measure: MeasureSpec, max_state: int):
        self.envelope = DyadicEnvelope(measure, depth_for(max_state))

    def block(self, start: np.ndarray, times: Sequence[float], streams: ReplicateStreams,
              record_events: bool = False) -> BatchResult:
        env = self.envelope
        recorder = _Recorder(start, times, record_events)
        state = start.astype(np.int64).copy()
        now = np.zeros(state.size)
        no_cap = np.zeros(state.size, dtype=bool)
        active = np.arange(state.size)
        while active.size:
            k = state[active].astype(float)
            level = env.level(k)
            low_rate = k * (k - 1.0) / 2.0 * env.low_total[level]
            # state 1 is absorbing
            rate = np.where(k >= 2.0, low_rate + env.cum_tier_rate[level], 0.0)
            with np.errstate(divide="ignore"):
                next_time = now[active] + streams.standard_exponential(active) / rate
            recorder.settle(active, next_time, state[active], no_cap[active])
            keep = ~recorder.done(active)
            active, k, level, low_rate, next_time = active[keep], k[keep], level[keep], low_rate[keep], next_time[keep]
            if not active.size:
                break
            now[active] = next_time
            is_low, tier, u = env.draw(streams, active, level, low_rate)
            ki = state[active]
            pair = 2 + streams.binomial(active, np.maximum(ki - 2, 0), u)
            pair_ok = streams.random(active) * (pair * (pair - 1) / 2.0) < 1.0
            merged = streams.binomial(active, ki, u)
            tier_ok = (streams.random(active) < (env.tier_lower[tier] / u) ** 2) & (merged >= 2)
            size = np.where(is_low, pair, merged)
            accept = np.where(is_low, pair_ok, tier_ok)
            if accept.any():
                rows = active[accept]
                state[rows] = state[rows] - size[accept] + 1
                recorder.jumped(rows, next_time[accept], state[rows])
        return recorder.result()

    def fixation(self, start: np.ndarray, times: Sequence[float], streams: ReplicateStreams, cap: int,
                 record_events: bool = False) -> BatchResult:
        env = self.envelope
        recorder = _Recorder(start, times, record_events)
        state = start.astype(np.int64).copy()
        capped = np.zeros(state.size, dtype=bool)
        now = np.zeros(state.size)
        overflow = 10.0 * cap + 100.0
        active = np.arange(state.size)
        while active.size:
            k = state[active].astype(float)
            level = env.level(k)
            eps = env.eps[level]
            low_rate = k * (k + 1.0) / (2.0 * (1.0 - eps) ** 2) * env.low_total[level]
            rate = low_rate + env.cum_tier_rate[level]
            next_time = now[active] + streams.standard_exponential(active) / rate
            recorder.settle(active, next_time, state[active], capped[active])
            keep = ~recorder.done(active)
            active, k, level, eps = active[keep], k[keep], level[keep], eps[keep]
            low_rate, next_time = low_rate[keep], next_time[keep]
            if not active.size:
                break
            now[active] = next_time
            is_low, tier, u = env.draw(streams, active, level, low_rate)
            ki = state[active]
            # size-biased pair: 2 + NegBin(k+2, 1-u)
            pair = 2 + streams.negative_binomial(active, ki + 2, 1.0 - np.minimum(u, 0.5))
            pair_ok = (streams.random(active) * (pair * (pair - 1) / 2.0)
                       < ((1.0 - eps) / (1.0 - u)) ** 2)
            mix = streams.gamma(active, ki.astype(float), u / (1.0 - u))
            beyond = mix > overflow
            joined = streams.poisson(active, np.where(beyond, 0.0, mix))
            joined = np.where(beyond, np.int64(overflow), joined)
            tier_ok = (streams.random(active) < (env.tier_lower[tier] / u) ** 2) & (joined >= 2)
            size = np.where(is_low, pair, joined)
            accept = np.where(is_low, pair_ok, tier_ok)
            if accept.any():
                rows = active[accept]
                state[rows] = state[rows] + size[accept] - 1
                recorder.jumped(rows, next_time[accept], state[rows])
                over = rows[state[rows] > cap]
                if over.size:
                    # capped replicates keep their last state at every later query time
                    capped[over] = True
                    recorder.settle(over, np.full(over.size, np.inf), state[over], capped[over])
        return recorder.result()


class TableSampler:
    """Gillespie sampler over cached per-state jump laws (alias tables)."""

    def __init__(self, measure: MeasureSpec, rate_repository: RateRepositoryInterface, tail_tol: float):
        self.measure = measure
        self.rate_repository = rate_repository
        self.tail_tol = tail_tol

    def block(self, start: np.ndarray, times: Sequence[float], streams: ReplicateStreams,
              record_events: bool = False) -> BatchResult:
        recorder = _Recorder(start, times, record_events)
        for row, k in enumerate(start.tolist()):
            rng = streams.generators[row]
            index = np.array([row])
            now = 0.0
            while True:
                rate = self.rate_repository.block_total_rate(k, self.measure) if k >= 2 else 0.0
                next_time = now + rng.standard_exponential() / rate if rate > 0.0 else math.inf
                recorder.settle(index, np.array([next_time]), np.array([k]), np.array([False]))
                if recorder.done(index)[0]:
                    break
                now = next_time
                k = int(self.rate_repository.block_alias(k, self.measure).sample(rng)) + 1
                recorder.jumped(index, np.array([now]), np.array([k]))
        return recorder.result()

    def fixation(self, start: np.ndarray, times: Sequence[float], streams: ReplicateStreams, cap: int,
                 record_events: bool = False) -> BatchResult:
        recorder = _Recorder(start, times, record_events)
        for row, k in enumerate(start.tolist()):
            rng = streams.generators[row]
            index = np.array([row])
            now = 0.0
            while True:
                table = self.rate_repository.fixation_table(k, self.measure, self.tail_tol)
                next_time = now + rng.standard_exponential() / table.total_rate
                recorder.settle(index, np.array([next_time]), np.array([k]), np.array([False]))
                if recorder.done(index)[0]:
                    break
                now = next_time
                if rng.random() >= table.tail_mass:
                    k = k + 1 + int(table.alias.sample(rng))
                elif table.harmonic:
                    k = k + table.sample_tail_step(rng)
                else:
                    # beyond the tabulated targets: treated as an overflow
                    k = max(int(table.targets()[-1]) + 1, cap + 1)
                recorder.jumped(index, np.array([now]), np.array([k]))
                if k > cap:
                    recorder.settle(index, np.array([math.inf]), np.array([k]), np.array([True]))
                    break
        return recorder.result()


def check_start(kind: str, start: int, cap: Optional[int]):
    if start < 1:
        raise DomainError(f"The initial state must be positive, got {start}.")
    if kind == "fixation" and cap is not None and cap <= start:
        raise DomainError(f"cap must exceed the initial state ({cap} <= {start}).")
