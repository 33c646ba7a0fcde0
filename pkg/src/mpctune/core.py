"""Domain types and Pareto dominance machinery shared by every optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class UsageError(ValueError):
    """Raised when an operation is called with inconsistent inputs."""


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned box ``theta_min <= theta <= theta_max``."""

    theta_min: np.ndarray
    theta_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.theta_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.theta_max, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise UsageError("bounds must be two vectors of equal length >= 1")
        if not np.all(lo < hi):
            raise UsageError("theta_min must be strictly below theta_max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "theta_min", lo)
        object.__setattr__(self, "theta_max", hi)

    @classmethod
    def uniform(cls, low: float, high: float, dim: int) -> "BoxBounds":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.theta_min.size

    @property
    def span(self) -> np.ndarray:
        return self.theta_max - self.theta_min

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.theta_min) and np.all(theta <= self.theta_max))

    def clip(self, theta) -> np.ndarray:
        return np.clip(theta, self.theta_min, self.theta_max)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform i.i.d. draws, shape ``(n, dim)``."""
        u = rng.random((n, self.dim))
        return self.theta_min + u * self.span

    def to_unit(self, theta) -> np.ndarray:
        return (np.asarray(theta, dtype=float) - self.theta_min) / self.span

    def from_unit(self, u) -> np.ndarray:
        return self.theta_min + np.asarray(u, dtype=float) * self.span


@dataclass(frozen=True)
class Evaluation:
    """Result of one black-box query.

    ``objectives`` is ``None`` exactly when the query crashed.  ``info``
    carries diagnostics such as the crash reason and is not compared.
    """

    theta: np.ndarray
    crash_ok: bool
    objectives: Optional[np.ndarray]
    sim_steps: int
    wall_time: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.crash_ok:
            if self.objectives is None:
                raise UsageError("successful evaluation requires objectives")
            obj = np.asarray(self.objectives, dtype=float).copy()
            if obj.ndim != 1 or obj.size < 2:
                raise UsageError("objective vector needs M >= 2 entries")
            if not np.all(np.isfinite(obj)):
                raise UsageError("successful evaluation has non-finite objectives")
            obj.setflags(write=False)
            object.__setattr__(self, "objectives", obj)
        elif self.objectives is not None:
            raise UsageError("crashed evaluation must not carry objectives")
        if int(self.sim_steps) < 0:
            raise UsageError("sim_steps must be non-negative")
        object.__setattr__(self, "sim_steps", int(self.sim_steps))
        object.__setattr__(self, "crash_ok", bool(self.crash_ok))
        object.__setattr__(self, "wall_time", float(self.wall_time))

    def with_wall_time(self, seconds: float) -> "Evaluation":
        return Evaluation(self.theta, self.crash_ok, self.objectives,
                          self.sim_steps, seconds, dict(self.info))


@dataclass(frozen=True)
class Dataset:
    """Append-only ordered tuple of evaluations."""

    evaluations: tuple = ()

    def __post_init__(self):
        evals = tuple(self.evaluations)
        object.__setattr__(self, "evaluations", evals)
        if evals:
            _check_shapes(evals, evals[0].theta.size, _first_m(evals))

    def __len__(self):
        return len(self.evaluations)

    def __iter__(self):
        return iter(self.evaluations)

    def __getitem__(self, i):
        return self.evaluations[i]

    @property
    def thetas(self) -> np.ndarray:
        if not self.evaluations:
            return np.empty((0, 0))
        return np.array([e.theta for e in self.evaluations])

    @property
    def success_mask(self) -> np.ndarray:
        return np.array([e.crash_ok for e in self.evaluations], dtype=bool)

    @property
    def n_success(self) -> int:
        return int(self.success_mask.sum()) if self.evaluations else 0

    def success_indices(self) -> np.ndarray:
        return np.flatnonzero(self.success_mask) if self.evaluations else np.empty(0, int)

    def crash_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.success_mask) if self.evaluations else np.empty(0, int)

    def success_objectives(self) -> np.ndarray:
        objs = [e.objectives for e in self.evaluations if e.crash_ok]
        if not objs:
            return np.empty((0, 0))
        return np.array(objs)


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated successful members of a dataset.

    An empty front means no feasible point has been observed yet.
    """

    member_indices: tuple
    objective_points: np.ndarray

    @property
    def is_empty(self) -> bool:
        return len(self.member_indices) == 0

    def __len__(self):
        return len(self.member_indices)


def _first_m(evals) -> Optional[int]:
    for e in evals:
        if e.crash_ok:
            return e.objectives.size
    return None


def _check_shapes(evals, n_dim, n_obj):
    for e in evals:
        if e.theta.size != n_dim:
            raise UsageError("decision dimension mismatch within dataset")
        if e.crash_ok and n_obj is not None and e.objectives.size != n_obj:
            raise UsageError("objective dimension mismatch within dataset")


def dominates(a, b) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise UsageError(f"length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def domination_matrix(points: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is true when point ``i`` dominates point ``j``.

    Infinite entries are allowed and compare as usual.
    """
    P = np.asarray(points, dtype=float)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    return le & lt


def pareto_filter(points) -> np.ndarray:
    """Indices of non-dominated points, in input order.

    Duplicates of a non-dominated point are all kept, since equal
    vectors do not dominate each other.
    """
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.empty(0, dtype=int)
    if P.ndim != 2:
        raise UsageError("points must be a 2-D array (n, M)")
    if not np.all(np.isfinite(P)):
        raise UsageError("pareto_filter requires finite points")
    # Chunk the quadratic comparison to bound memory on large archives.
    n = P.shape[0]
    dominated = np.zeros(n, dtype=bool)
    chunk = max(1, 4_000_000 // max(1, n * P.shape[1]))
    for start in range(0, n, chunk):
        block = P[start:start + chunk]
        le = np.all(block[:, None, :] <= P[None, :, :], axis=2)
        lt = np.any(block[:, None, :] < P[None, :, :], axis=2)
        dominated |= np.any(le & lt, axis=0)
    return np.flatnonzero(~dominated)


def current_front(dataset: Dataset) -> ParetoFront:
    """Pareto front over the successful evaluations of ``dataset``."""
    idx = dataset.success_indices()
    if idx.size == 0:
        return ParetoFront((), np.empty((0, 0)))
    objs = np.array([dataset[i].objectives for i in idx])
    keep = pareto_filter(objs)
    return ParetoFront(tuple(int(i) for i in idx[keep]), objs[keep])


def augment(dataset: Dataset, new: Iterable[Evaluation]) -> Dataset:
    """Old evaluations in order, followed by the new ones in order."""
    new = tuple(new)
    if not new:
        return dataset
    old = dataset.evaluations
    n_dim = (old or new)[0].theta.size
    n_obj = _first_m(old)
    _check_shapes(new, n_dim, n_obj if n_obj is not None else _first_m(new))
    # The old part is already consistent, so skip re-validating it.
    out = object.__new__(Dataset)
    object.__setattr__(out, "evaluations", old + new)
    return out


def as_points(objs: Sequence) -> np.ndarray:
    """Stack objective vectors into an ``(n, M)`` array (``(0, 0)`` if empty)."""
    if len(objs) == 0:
        return np.empty((0, 0))
    return np.asarray(np.vstack(objs), dtype=float)
