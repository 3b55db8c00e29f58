# service/simulation_service.py
import logging
import math
from multiprocessing.pool import ThreadPool
from typing import List, Literal, Optional, Sequence

import numpy as np

from core.exceptions import DataValidationError, DomainError, UnsupportedRepresentationError
from core.models import (DualityEstimate, EmpiricalCFPoint, LimitParams, MeasureSpec, PathRecord,
                         ScaledSample)
from data import ComputationContext, config
from data import measures
from data.path_samplers import BatchResult, PoissonMergerSampler, ReplicateStreams, TableSampler, check_start
from data.rate_repository import RateRepositoryInterface

logger = logging.getLogger(__name__)

Kind = Literal["block", "fixation"]
Strategy = Literal["auto", "poisson", "table"]

TABLE_TAIL_TOL = 1e-6
BLOCK_STREAM = 0
FIXATION_STREAM = 1


def replicate_generator(seed: int, replicate: int, stream: int = 0) -> np.random.Generator:
    """Counter-based stream of one replicate, independent of batching and scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, replicate))))


class SimulationServiceInterface:
    def simulate_block_path(self, n: int, m: MeasureSpec, horizon: float, seed: int,
                            strategy: Strategy = "auto") -> PathRecord:
        """
        One exact path of the block counting process N^(n) on [0, horizon].

        Args:
            n (int): Initial number of blocks.
            m (MeasureSpec): Driving measure.
            horizon (float): Final time.
            seed (int): Master seed.
            strategy (str): ``auto``, ``poisson`` (beta-type measures only) or ``table``.

        Returns:
            PathRecord: Event times (starting at 0) and the strictly decreasing states.

        Raises:
            DomainError: If n < 1 or horizon < 0.
        """
        pass

    def simulate_fixation_path(self, m0: int, m: MeasureSpec, horizon: float, cap: int, seed: int,
                               strategy: Strategy = "auto") -> PathRecord:
        """
        One exact path of the fixation line L^(m0), stopped at the first state above cap.

        Returns:
            PathRecord: Event times and strictly increasing states; ``capped`` set on overflow.

        Raises:
            DomainError: If cap <= m0.
        """
        pass

    def sample_scaled(self, kind: Kind, n: int, params: LimitParams, times: Sequence[float], replicates: int,
                      seed: int, cap: Optional[int] = None, strategy: Strategy = "auto") -> List[ScaledSample]:
        """
        Scaled states log N_t - e^{-bt} log n (block) or log L_t - e^{bt} log n (fixation)
        for every replicate and query time.

        Replicate r draws from its own counter-based stream keyed by (seed, r), so the
        output depends on neither the batch size nor the number of worker threads.

        Returns:
            List[ScaledSample]: Replicate-major, one record per (replicate, t).

        Raises:
            DataValidationError: If times are not sorted and nonnegative.
        """
        pass

    def empirical_cf(self, samples: Sequence[ScaledSample], x_grid: Sequence[float]) -> List[EmpiricalCFPoint]:
        """
        Monte-Carlo characteristic function (1/R)Σexp(i·x·value) with componentwise standard errors.

        Raises:
            DataValidationError: If samples is empty or mixes several times.
        """
        pass

    def duality_mc(self, n: int, m0: int, t: float, m: MeasureSpec, replicates: int, seed: int) -> DualityEstimate:
        """
        Monte-Carlo estimates of both sides of P(L_t^(m0) >= n) = P(N_t^(n) <= m0).
        """
        pass


class SimulationService(SimulationServiceInterface):
    def __init__(self, rate_repository: RateRepositoryInterface, threads: Optional[int] = None,
                 batch_size: Optional[int] = None):
        self.rate_repository = rate_repository
        self.threads = threads or config['threads']
        self.batch_size = batch_size or config['batch_size']

    def _sampler(self, m: MeasureSpec, strategy: Strategy, max_state: int):
        if strategy == "table":
            return TableSampler(m, self.rate_repository, TABLE_TAIL_TOL)
        if measures.is_beta_family(m):
            return PoissonMergerSampler(m, max_state)
        if strategy == "poisson":
            raise UnsupportedRepresentationError("The Poisson merger sampler needs beta-type components and atoms.")
        return TableSampler(m, self.rate_repository, TABLE_TAIL_TOL)

    def _run(self, kind: Kind, start: int, m: MeasureSpec, times: Sequence[float], replicates: int, seed: int,
             cap: int, strategy: Strategy, stream: int, record_events: bool = False) -> List[BatchResult]:
        sampler = self._sampler(m, strategy, start if kind == "block" else cap)
        firsts = list(range(0, replicates, self.batch_size))
        sizes = [min(self.batch_size, replicates - lo) for lo in firsts]

        def run_batch(batch: int) -> BatchResult:
            streams = ReplicateStreams([replicate_generator(seed, r, stream)
                                        for r in range(firsts[batch], firsts[batch] + sizes[batch])])
            initial = np.full(sizes[batch], start, dtype=np.int64)
            with ComputationContext(f"{kind}_batch"):
                if kind == "block":
                    return sampler.block(initial, times, streams, record_events)
                return sampler.fixation(initial, times, streams, cap, record_events)

        logger.debug("simulate kind=%s start=%d replicates=%d batches=%d sampler=%s threads=%d", kind, start,
                     replicates, len(sizes), type(sampler).__name__, self.threads)
        if self.threads == 1 or len(sizes) == 1:
            return [run_batch(i) for i in range(len(sizes))]
        with ThreadPool(self.threads) as pool:
            return pool.map(run_batch, range(len(sizes)))

    def simulate_block_path(self, n: int, m: MeasureSpec, horizon: float, seed: int,
                            strategy: Strategy = "auto") -> PathRecord:
        check_start("block", n, None)
        if horizon < 0.0 or not math.isfinite(horizon):
            raise DomainError("horizon must be finite and nonnegative.")
        with ComputationContext("simulate_block_path"):
            result = self._run("block", n, m, [horizon], 1, seed, n, strategy, BLOCK_STREAM, record_events=True)[0]
            times, states = result.events[0]
            return PathRecord(kind="block", event_times=times, states=states, initial_state=n, horizon=horizon)

    def simulate_fixation_path(self, m0: int, m: MeasureSpec, horizon: float, cap: int, seed: int,
                               strategy: Strategy = "auto") -> PathRecord:
        check_start("fixation", m0, cap)
        if horizon < 0.0 or not math.isfinite(horizon):
            raise DomainError("horizon must be finite and nonnegative.")
        with ComputationContext("simulate_fixation_path"):
            result = self._run("fixation", m0, m, [horizon], 1, seed, cap, strategy, FIXATION_STREAM,
                               record_events=True)[0]
            times, states = result.events[0]
            capped = bool(result.capped[0, -1])
            if capped:
                logger.info("fixation path from %d exceeded cap %d", m0, cap)
            return PathRecord(kind="fixation", event_times=times, states=states, initial_state=m0,
                              horizon=horizon, capped=capped)

    def sample_scaled(self, kind: Kind, n: int, params: LimitParams, times: Sequence[float], replicates: int,
                      seed: int, cap: Optional[int] = None, strategy: Strategy = "auto") -> List[ScaledSample]:
        times = [float(t) for t in times]
        if not times or any(t < 0.0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
            raise DataValidationError("times must be nonempty, nonnegative and sorted.")
        if replicates < 1:
            raise DomainError("replicates must be positive.")
        cap = config['cap'] if cap is None else cap
        check_start(kind, n, cap if kind == "fixation" else None)
        with ComputationContext("sample_scaled"):
            stream = BLOCK_STREAM if kind == "block" else FIXATION_STREAM
            batches = self._run(kind, n, params.measure, times, replicates, seed, cap, strategy, stream)
            states = np.concatenate([batch.states for batch in batches])
            capped = np.concatenate([batch.capped for batch in batches])
            t_arr = np.asarray(times)
            drift = np.exp(-params.b * t_arr) if kind == "block" else np.exp(params.b * t_arr)
            values = np.log(states) - drift * math.log(n)
            values[:, t_arr == 0.0] = 0.0
            if capped.any():
                logger.warning("%d of %d fixation replicates exceeded cap %d", int(capped[:, -1].sum()),
                               replicates, cap)
            return [ScaledSample(t=times[q], value=float(values[r, q]), n=n, replicate_id=r,
                                 raw_state=int(states[r, q]), capped=bool(capped[r, q]))
                    for r in range(replicates) for q in range(len(times))]

    def empirical_cf(self, samples: Sequence[ScaledSample], x_grid: Sequence[float]) -> List[EmpiricalCFPoint]:
        if not samples:
            raise DataValidationError("empirical_cf needs at least one sample.")
        if len({s.t for s in samples}) != 1:
            raise DataValidationError("empirical_cf needs samples taken at a single time.")
        values = np.array([s.value for s in samples])
        x = np.asarray(x_grid, dtype=float)
        phase = np.outer(x, values)
        re, im = np.cos(phase), np.sin(phase)
        scale = math.sqrt(values.size)
        ddof = 1 if values.size > 1 else 0
        points = []
        for i, xi in enumerate(x):
            points.append(EmpiricalCFPoint(x=float(xi), re=float(re[i].mean()), im=float(im[i].mean()),
                                           se_re=float(re[i].std(ddof=ddof) / scale),
                                           se_im=float(im[i].std(ddof=ddof) / scale)))
        return points

    def duality_mc(self, n: int, m0: int, t: float, m: MeasureSpec, replicates: int, seed: int) -> DualityEstimate:
        check_start("block", n, None)
        check_start("block", m0, None)
        if t < 0.0:
            raise DomainError("t must be nonnegative.")
        with ComputationContext("duality_mc"):
            block = self._run("block", n, m, [t], replicates, seed, n, "auto", BLOCK_STREAM)
            rhs_hits = np.concatenate([batch.states[:, 0] for batch in block]) <= m0
            if m0 >= n:
                lhs_hits = np.ones(replicates, dtype=bool)
            else:
                # L_t >= n is decided once the line passes n - 1
                fixation = self._run("fixation", m0, m, [t], replicates, seed, n - 1, "auto", FIXATION_STREAM)
                lhs_hits = np.concatenate([batch.states[:, 0] for batch in fixation]) >= n
            lhs, rhs = float(lhs_hits.mean()), float(rhs_hits.mean())
            return DualityEstimate(n=n, m0=m0, t=t, lhs=lhs, lhs_se=math.sqrt(lhs * (1.0 - lhs) / replicates),
                                   rhs=rhs, rhs_se=math.sqrt(rhs * (1.0 - rhs) / replicates))
