"""Random search and full-factorial grid search."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .core import BoxBounds
from .tracking import RunRecord, RunTracker, rng_from


@dataclass(frozen=True)
class GridSpec:
    levels_per_dim: int = 6

    def __post_init__(self):
        if self.levels_per_dim < 2:
            raise ValueError("levels_per_dim must be >= 2")

    def levels(self, bounds: BoxBounds) -> list:
        return [np.linspace(lo, hi, self.levels_per_dim)
                for lo, hi in zip(bounds.theta_min, bounds.theta_max)]

    def points(self, bounds: BoxBounds):
        """Cartesian product in lexicographic order of level indices."""
        levels = self.levels(bounds)
        for idx in itertools.product(range(self.levels_per_dim), repeat=bounds.dim):
            yield np.array([levels[d][i] for d, i in enumerate(idx)])

    def size(self, dim: int) -> int:
        return self.levels_per_dim ** dim


def run_random(problem, budget_steps=None, rng=None, *, max_evals=None, batch_size: int = 1,
               clock=time.perf_counter, workers: int = 1) -> RunRecord:
    """Uniform i.i.d. samples until the budget is spent."""
    rng = rng_from(rng)
    tracker = RunTracker(problem, budget_steps, max_evals=max_evals, clock=clock,
                         workers=workers, config={"algorithm": "Rand"})
    while not tracker.exhausted:
        X = problem.bounds.sample(rng, batch_size)
        tracker.evaluate(X)
    return tracker.finish()


def run_grid(problem, spec: GridSpec = GridSpec(), budget_steps=None, *, max_evals=None,
             batch_size: int = 1, clock=time.perf_counter, workers: int = 1) -> RunRecord:
    """Evaluate the full factorial grid, truncating when the budget runs out."""
    tracker = RunTracker(problem, budget_steps, max_evals=max_evals, clock=clock,
                         workers=workers,
                         config={"algorithm": "Grid", "levels_per_dim": spec.levels_per_dim})
    batch = []
    for theta in spec.points(problem.bounds):
        if tracker.exhausted:
            break
        batch.append(theta)
        if len(batch) == batch_size:
            tracker.evaluate(np.array(batch))
            batch = []
    if batch and not tracker.exhausted:
        tracker.evaluate(np.array(batch))
    return tracker.finish()
