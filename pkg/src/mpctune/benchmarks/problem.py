"""Benchmark problem container and crash-region wrapper."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..core import BoxBounds, Evaluation, UsageError

NOMINAL_STEPS = 8400
NOMINAL_EVAL_SECONDS = 20.0


@dataclass(frozen=True)
class BenchmarkProblem:
    """A black box with box bounds and a frozen HV reference point.

    ``nominal_eval_seconds`` lets cheap synthetic problems stand in for an
    expensive simulator: the tracker charges that time per evaluation
    instead of measuring it.
    """

    name: str
    bounds: BoxBounds
    n_obj: int
    reference_point: np.ndarray
    func: Callable[[np.ndarray], Evaluation] = field(repr=False)
    mean_steps_per_eval: int = NOMINAL_STEPS
    nominal_eval_seconds: Optional[float] = None
    params: dict = field(default_factory=dict)

    @property
    def n_dim(self) -> int:
        return self.bounds.dim

    def evaluate(self, theta) -> Evaluation:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_dim,):
            raise UsageError(f"expected theta of shape ({self.n_dim},), got {theta.shape}")
        if not self.bounds.contains(theta):
            raise UsageError("theta outside the problem bounds")
        return self.func(theta)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def contains(self, theta) -> bool:
        return bool(np.linalg.norm(np.asarray(theta) - np.asarray(self.center)) <= self.radius)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


def region_from_dict(d: dict):
    kind = d.get("kind", "ball")
    if kind == "ball":
        return Ball(np.asarray(d["center"], float), float(d["radius"]))
    if kind == "box":
        return Box(np.asarray(d["lower"], float), np.asarray(d["upper"], float))
    raise ValueError(f"unknown region kind {kind!r}")


def with_crash_region(problem: BenchmarkProblem, region) -> BenchmarkProblem:
    """Queries inside ``region`` crash (no objectives); others are unchanged."""
    base = problem.func

    def func(theta):
        if region.contains(theta):
            return Evaluation(theta, False, None, problem.mean_steps_per_eval,
                              problem.nominal_eval_seconds or 0.0,
                              {"crash_reason": "region"})
        return base(theta)

    return replace(problem, name=problem.name + "-crash", func=func,
                   params={**problem.params, "crash_region": region})
