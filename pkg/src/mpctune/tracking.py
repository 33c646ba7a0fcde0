"""Budgeted evaluation loop and the run trace every optimizer produces.

All optimizers talk to the black box through :class:`RunTracker`.  It
charges the time spent between two evaluation batches as algorithmic
overhead, converts that overhead into simulation steps, and stops the run
once the step budget (or an optional evaluation cap) is used up.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import Dataset, Evaluation, augment, current_front, pareto_filter
from .metrics import HvCurve, hypervolume, overhead_to_steps

log = logging.getLogger(__name__)

Clock = Callable[[], float]


class SteppingClock:
    """Deterministic clock advancing by a fixed increment on every read.

    Runs driven by this clock have timing-independent batch sizes, which
    makes adaptive batching reproducible.
    """

    def __init__(self, increment: float = 0.01, start: float = 0.0):
        self.increment = float(increment)
        self._now = float(start)

    def __call__(self) -> float:
        self._now += self.increment
        return self._now


@dataclass
class IterationTrace:
    """Bookkeeping for one committed batch of evaluations."""

    index: int
    batch_size: int
    overhead_seconds: float
    overhead_steps: int
    mean_eval_seconds: float
    gamma: Optional[float] = None
    front: Optional[list] = None
    note: str = ""
    requested_batch: Optional[int] = None


@dataclass
class RunRecord:
    """Full trace of one optimizer run."""

    config: dict
    evaluations: List[Evaluation] = field(default_factory=list)
    batch_of: List[int] = field(default_factory=list)
    traces: List[IterationTrace] = field(default_factory=list)
    status: str = "complete"
    notes: List[str] = field(default_factory=list)

    @property
    def dataset(self) -> Dataset:
        return Dataset(tuple(self.evaluations))

    @property
    def total_overhead_seconds(self) -> float:
        return float(sum(t.overhead_seconds for t in self.traces))

    @property
    def total_eval_seconds(self) -> float:
        return float(sum(e.wall_time for e in self.evaluations))

    @property
    def total_steps(self) -> int:
        return int(sum(e.sim_steps for e in self.evaluations)
                   + sum(t.overhead_steps for t in self.traces))

    @property
    def batch_sizes(self) -> List[int]:
        return [t.batch_size for t in self.traces]

    def thetas(self) -> np.ndarray:
        return np.array([e.theta for e in self.evaluations])

    def cumulative_steps(self) -> np.ndarray:
        """Steps consumed once each evaluation is committed, overhead included.

        The overhead of a batch is charged before the batch's evaluations.
        """
        out = np.empty(len(self.evaluations), dtype=float)
        overhead_by_batch = {t.index: t.overhead_steps for t in self.traces}
        total = 0
        seen = set()
        for i, (e, b) in enumerate(zip(self.evaluations, self.batch_of)):
            if b not in seen:
                seen.add(b)
                total += overhead_by_batch.get(b, 0)
            total += e.sim_steps
            out[i] = total
        return out

    def hv_curve(self, ref) -> HvCurve:
        """HV of the feasible front after each batch commit."""
        cum = self.cumulative_steps()
        ref = np.asarray(ref, dtype=float)
        steps, values = [], []
        front_pts = np.empty((0, ref.size))
        pending = []
        n = len(self.evaluations)
        for i, e in enumerate(self.evaluations):
            if e.crash_ok:
                pending.append(e.objectives)
            if i + 1 == n or self.batch_of[i + 1] != self.batch_of[i]:
                if pending:
                    front_pts = np.vstack([front_pts, np.array(pending)])
                    front_pts = front_pts[pareto_filter(front_pts)]
                    pending = []
                steps.append(cum[i])
                values.append(hypervolume(front_pts, ref) if len(front_pts) else 0.0)
        return HvCurve(np.asarray(steps, dtype=float), np.asarray(values, dtype=float))

    def relative_overhead_curve(self):
        """(cumulative steps, cumulative overhead / cumulative eval time) per batch."""
        cum = self.cumulative_steps()
        last_idx = {}
        for i, b in enumerate(self.batch_of):
            last_idx[b] = i
        ov = 0.0
        ev = 0.0
        by_batch = {t.index: t for t in self.traces}
        steps, ratio = [], []
        seen = 0
        for b in sorted(last_idx):
            ov += by_batch[b].overhead_seconds if b in by_batch else 0.0
            stop = last_idx[b] + 1
            ev += sum(e.wall_time for e in self.evaluations[seen:stop])
            seen = stop
            steps.append(cum[last_idx[b]])
            ratio.append(ov / ev if ev > 0 else 0.0)
        return np.asarray(steps, dtype=float), np.asarray(ratio, dtype=float)


class RunTracker:
    """Evaluate batches against a problem while accounting for the budget.

    Parameters
    ----------
    problem : BenchmarkProblem
        Anything exposing ``evaluate(theta) -> Evaluation`` and ``bounds``.
    budget_steps : int or None
        Simulation steps including converted overhead; ``None`` for no cap.
    max_evals : int or None
        Optional hard cap on the number of evaluations.
    clock : callable
        Time source for overhead (and, without a nominal time, evaluation)
        measurement.
    workers : int
        Evaluations of one batch may run on this many threads.  Results
        are committed in proposal order.
    """

    def __init__(self, problem, budget_steps=None, *, max_evals=None,
                 clock: Clock = time.perf_counter, workers: int = 1,
                 config: Optional[dict] = None):
        self.problem = problem
        self.budget_steps = budget_steps
        self.max_evals = max_evals
        self.clock = clock
        self.workers = max(1, int(workers))
        self.dataset = Dataset()
        self.record = RunRecord(config=dict(config or {}))
        self._sim_steps = 0
        self._eval_seconds = 0.0
        self._overhead_steps = 0
        self._mark = clock()

    # -- budget -------------------------------------------------------------
    @property
    def n_evals(self) -> int:
        return len(self.dataset)

    @property
    def total_steps(self) -> int:
        return self._sim_steps + self._overhead_steps

    @property
    def exhausted(self) -> bool:
        if self.max_evals is not None and self.n_evals >= self.max_evals:
            return True
        if self.budget_steps is not None and self.total_steps >= self.budget_steps:
            return True
        return False

    def remaining_evals(self) -> Optional[int]:
        if self.max_evals is None:
            return None
        return max(0, self.max_evals - self.n_evals)

    def seconds_per_step(self) -> float:
        if self._sim_steps > 0 and self._eval_seconds > 0:
            return self._eval_seconds / self._sim_steps
        nominal = getattr(self.problem, "nominal_eval_seconds", None)
        steps = getattr(self.problem, "mean_steps_per_eval", 1) or 1
        if nominal:
            return float(nominal) / steps
        return 1e-6

    def restart_overhead_timer(self):
        """Discard time spent so far (e.g. setup) from the overhead account."""
        self._mark = self.clock()

    def note(self, message: str):
        log.info(message)
        self.record.notes.append(message)

    # -- evaluation ---------------------------------------------------------
    def _timed(self, theta):
        nominal = getattr(self.problem, "nominal_eval_seconds", None)
        if nominal is not None:
            return self.problem.evaluate(theta)
        t0 = self.clock()
        ev = self.problem.evaluate(theta)
        return ev.with_wall_time(self.clock() - t0)

    def evaluate(self, thetas, *, gamma=None, front=None, note="",
                 requested: Optional[int] = None) -> List[Evaluation]:
        """Evaluate a batch; returns the committed evaluations (maybe truncated)."""
        overhead = max(0.0, self.clock() - self._mark)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        remaining = self.remaining_evals()
        if remaining is not None:
            thetas = thetas[:remaining]
        bounds = self.problem.bounds
        thetas = bounds.clip(thetas)
        if thetas.shape[0] == 0:
            self._mark = self.clock()
            return []

        nominal = getattr(self.problem, "nominal_eval_seconds", None)
        if self.workers > 1 and thetas.shape[0] > 1:
            t0 = self.clock()
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self.problem.evaluate, list(thetas)))
            if nominal is None:
                elapsed = self.clock() - t0
                share = elapsed * min(self.workers, len(results)) / len(results)
                results = [r.with_wall_time(share) for r in results]
        else:
            results = [self._timed(t) for t in thetas]

        batch_index = len(self.record.traces)
        self._sim_steps += sum(r.sim_steps for r in results)
        self._eval_seconds += sum(r.wall_time for r in results)
        ov_steps = overhead_to_steps(overhead, self.seconds_per_step())
        self._overhead_steps += ov_steps
        self.dataset = augment(self.dataset, results)
        self.record.evaluations.extend(results)
        self.record.batch_of.extend([batch_index] * len(results))
        self.record.traces.append(IterationTrace(
            index=batch_index,
            batch_size=len(results),
            overhead_seconds=overhead,
            overhead_steps=ov_steps,
            mean_eval_seconds=float(np.mean([r.wall_time for r in results])),
            gamma=gamma,
            front=front,
            note=note,
            requested_batch=requested,
        ))
        self._mark = self.clock()
        return results

    @property
    def last_trace(self) -> Optional[IterationTrace]:
        return self.record.traces[-1] if self.record.traces else None

    def front(self):
        return current_front(self.dataset)

    def finish(self, status: str = "complete") -> RunRecord:
        self.record.status = status
        return self.record


def rng_from(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
