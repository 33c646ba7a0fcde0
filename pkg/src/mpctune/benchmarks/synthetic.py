"""Synthetic verification problems with analytic Pareto fronts."""

from __future__ import annotations

import numpy as np

from ..core import BoxBounds, Evaluation
from .problem import (NOMINAL_EVAL_SECONDS, NOMINAL_STEPS, BenchmarkProblem, Box,
                      with_crash_region)


def zdt1_values(x) -> np.ndarray:
    """ZDT1 on the unit box: f1 = x1, f2 = g (1 - sqrt(f1 / g))."""
    x = np.atleast_2d(x)
    f1 = x[:, 0]
    g = 1.0 + 9.0 * np.mean(x[:, 1:], axis=1) if x.shape[1] > 1 else np.ones(len(x))
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return np.column_stack([f1, f2])


def dtlz2_values(x, n_obj: int = 3) -> np.ndarray:
    """DTLZ2 on the unit box; the front is the unit sphere's positive orthant."""
    x = np.atleast_2d(x)
    g = np.sum((x[:, n_obj - 1:] - 0.5) ** 2, axis=1)
    ang = x[:, : n_obj - 1] * np.pi / 2
    out = np.empty((x.shape[0], n_obj))
    for m in range(n_obj):
        f = 1.0 + g
        f = f * np.prod(np.cos(ang[:, : n_obj - 1 - m]), axis=1)
        if m > 0:
            f = f * np.sin(ang[:, n_obj - 1 - m])
        out[:, m] = f
    return out


def zdt1_front(n_points: int = 1000) -> np.ndarray:
    f1 = np.linspace(0.0, 1.0, n_points)
    return np.column_stack([f1, 1.0 - np.sqrt(f1)])


def _make(name, values, n_dim, n_obj, ref, bounds, nominal_seconds):
    bounds = bounds or BoxBounds.uniform(0.0, 1.0, n_dim)

    def func(theta):
        u = bounds.to_unit(theta)
        return Evaluation(theta, True, values(u)[0], NOMINAL_STEPS, nominal_seconds)

    return BenchmarkProblem(name=name, bounds=bounds, n_obj=n_obj,
                            reference_point=np.asarray(ref, float), func=func,
                            mean_steps_per_eval=NOMINAL_STEPS,
                            nominal_eval_seconds=nominal_seconds,
                            params={"n_dim": n_dim})


def synthetic_zdt1(n_dim: int = 5, bounds: BoxBounds = None,
                   nominal_seconds: float = NOMINAL_EVAL_SECONDS) -> BenchmarkProblem:
    """ZDT1 (M=2); reference point is the analytic nadir (1, 1) times 1.1."""
    return _make("zdt1", zdt1_values, n_dim, 2, [1.1, 1.1], bounds, nominal_seconds)


def synthetic_dtlz2_3obj(n_dim: int = 5, bounds: BoxBounds = None,
                         nominal_seconds: float = NOMINAL_EVAL_SECONDS) -> BenchmarkProblem:
    """DTLZ2 (M=3); reference point is the analytic nadir (1, 1, 1) times 1.1."""
    return _make("dtlz2", lambda u: dtlz2_values(u, 3), n_dim, 3, [1.1, 1.1, 1.1],
                 bounds, nominal_seconds)


# Crash regions sit on part of the optimal-set preimage without covering it.
# They are given in unit-box coordinates and mapped onto the problem bounds.
def _unit_region(problem: BenchmarkProblem, lower, upper) -> Box:
    b = problem.bounds
    return Box(b.from_unit(np.asarray(lower, float)), b.from_unit(np.asarray(upper, float)))


def crash_zdt1(n_dim: int = 5, **kw) -> BenchmarkProblem:
    """ZDT1 crashing for x1 in [0.4, 0.7] near the optimal set (x2.. <= 0.2)."""
    base = synthetic_zdt1(n_dim, **kw)
    lower = np.r_[0.4, np.zeros(n_dim - 1)]
    upper = np.r_[0.7, np.full(n_dim - 1, 0.2)]
    return with_crash_region(base, _unit_region(base, lower, upper))


def crash_dtlz2(n_dim: int = 5, **kw) -> BenchmarkProblem:
    """DTLZ2 crashing for x1 >= 0.6 while the distance variables lie in [0.25, 0.75]."""
    base = synthetic_dtlz2_3obj(n_dim, **kw)
    lower = np.r_[0.6, 0.0, np.full(n_dim - 2, 0.25)]
    upper = np.r_[1.0, 1.0, np.full(n_dim - 2, 0.75)]
    return with_crash_region(base, _unit_region(base, lower, upper))
