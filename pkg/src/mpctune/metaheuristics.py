"""NSGA-II and MOPSO with crash-constraint handling.

Crashed NSGA-II individuals carry ``inf`` in every objective, so sorting
pushes them to the last ranks; survivors that still carry ``inf`` are
re-seeded uniformly at random before the next variation step.  MOPSO
compares particles with the feasibility rule and breaks infeasible ties
at random.  The sorting helpers are reused by the TSEMO inner loop.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import BoxBounds, dominates
from .tracking import RunRecord, RunTracker, rng_from

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaConfig:
    n_pop: int = 100
    n_gen: int = 50
    mutation_scale: float = 0.1
    mutation_prob: Optional[float] = None   # None -> 1/N

    def __post_init__(self):
        if self.n_pop < 2 or self.n_pop % 2:
            raise ValueError("n_pop must be even and >= 2")
        if self.n_gen < 1:
            raise ValueError("n_gen must be >= 1")


@dataclass(frozen=True)
class PsoConfig:
    n_pop: int = 100
    n_rep: int = 250
    n_gen: int = 50
    inertia: float = 0.4
    c_cognitive: float = 2.0
    c_social: float = 2.0
    grid_divisions: int = 7
    grid_inflation: float = 0.1
    mutation_rate: float = 0.5

    def __post_init__(self):
        if min(self.n_pop, self.n_rep, self.n_gen, self.grid_divisions) < 1:
            raise ValueError("counts must be >= 1")


# ---------------------------------------------------------------------------
# variation operators
# ---------------------------------------------------------------------------

def crossover_interpolate(parent_a, parent_b, rng: np.random.Generator,
                          lam: Optional[float] = None) -> np.ndarray:
    """Random point on the segment between two parents."""
    a = np.asarray(parent_a, dtype=float)
    b = np.asarray(parent_b, dtype=float)
    if lam is None:
        lam = rng.random()
    return a + lam * (b - a)


def mutate_gaussian(theta, scale: float, per_gene_prob: float,
                    rng: np.random.Generator, bounds: BoxBounds) -> np.ndarray:
    """Add N(0, (scale * range)^2) noise to each gene with given probability."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    theta = np.array(theta, dtype=float)
    mask = rng.random(theta.shape) < per_gene_prob
    noise = rng.standard_normal(theta.shape) * scale * bounds.span
    theta = np.where(mask, theta + noise, theta)
    return bounds.clip(theta)


# ---------------------------------------------------------------------------
# sorting
# ---------------------------------------------------------------------------

def nondominated_sort(F) -> np.ndarray:
    """Domination rank per row (0 = non-dominated); ``inf`` entries allowed."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    if n == 0:
        return np.empty(0, dtype=int)
    le = np.ones((n, n), dtype=bool)
    lt = np.zeros((n, n), dtype=bool)
    for j in range(F.shape[1]):
        col = F[:, j]
        le &= col[:, None] <= col[None, :]
        lt |= col[:, None] < col[None, :]
    dom = le & lt
    counts = dom.sum(axis=0)
    ranks = np.full(n, -1, dtype=int)
    current = np.flatnonzero(counts == 0)
    r = 0
    while current.size:
        ranks[current] = r
        counts = counts - dom[current].sum(axis=0)
        counts[ranks >= 0] = -1
        current = np.flatnonzero(counts == 0)
        r += 1
    return ranks


def crowding_distance(F) -> np.ndarray:
    """Crowding distance of the members of one rank.

    Extremes per objective get ``inf``; an objective with zero range adds
    nothing to anyone.
    """
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for j in range(m):
        col = F[:, j]
        # Ties are broken by the remaining objectives to keep the result order-free.
        keys = [F[:, k] for k in range(m - 1, -1, -1) if k != j] + [col]
        order = np.lexsort(keys)
        lo, hi = col[order[0]], col[order[-1]]
        span = hi - lo
        if not np.isfinite(span) or span <= 0:
            continue
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        gaps = (col[order[2:]] - col[order[:-2]]) / span
        dist[order[1:-1]] += gaps
    return dist


def rank_and_crowd(F):
    """Ranks plus per-rank crowding distances (0 inside an all-``inf`` rank)."""
    F = np.asarray(F, dtype=float)
    ranks = nondominated_sort(F)
    crowd = np.zeros(F.shape[0])
    for r in np.unique(ranks):
        idx = np.flatnonzero(ranks == r)
        sub = F[idx]
        if np.all(np.isfinite(sub)):
            crowd[idx] = crowding_distance(sub)
    return ranks, crowd


def survivor_order(ranks, crowd) -> np.ndarray:
    """Indices sorted by rank ascending, then crowding descending (stable)."""
    return np.lexsort((np.arange(len(ranks)), -crowd, ranks))


def tournament(ranks, crowd, rng: np.random.Generator, n: int) -> np.ndarray:
    """Binary tournaments on (rank, crowding distance)."""
    size = len(ranks)
    a = rng.integers(0, size, n)
    b = rng.integers(0, size, n)
    better_b = (ranks[b] < ranks[a]) | ((ranks[b] == ranks[a]) & (crowd[b] > crowd[a]))
    return np.where(better_b, b, a)


def _offspring(X, ranks, crowd, config: GaConfig, bounds: BoxBounds, rng):
    n = config.n_pop
    pa = tournament(ranks, crowd, rng, n)
    pb = tournament(ranks, crowd, rng, n)
    lam = rng.random(n)[:, None]
    children = X[pa] + lam * (X[pb] - X[pa])
    prob = config.mutation_prob if config.mutation_prob is not None else 1.0 / bounds.dim
    mask = rng.random(children.shape) < prob
    noise = rng.standard_normal(children.shape) * config.mutation_scale * bounds.span
    return bounds.clip(np.where(mask, children + noise, children))


def nsga2_minimize(fun: Callable[[np.ndarray], np.ndarray], bounds: BoxBounds,
                   config: GaConfig, rng: np.random.Generator, init=None):
    """Plain NSGA-II on a cheap vectorized function ``fun(X) -> F``.

    Returns the final population ``(X, F, ranks)``.
    """
    X = bounds.sample(rng, config.n_pop)
    if init is not None and len(init):
        init = np.atleast_2d(init)[: config.n_pop]
        X[: len(init)] = init
    F = np.asarray(fun(X), dtype=float)
    ranks, crowd = rank_and_crowd(F)
    for _ in range(config.n_gen):
        C = _offspring(X, ranks, crowd, config, bounds, rng)
        FC = np.asarray(fun(C), dtype=float)
        UX = np.vstack([X, C])
        UF = np.vstack([F, FC])
        ur, uc = rank_and_crowd(UF)
        keep = survivor_order(ur, uc)[: config.n_pop]
        # Parents keep the rank and crowding computed on the merged population.
        X, F, ranks, crowd = UX[keep], UF[keep], ur[keep], uc[keep]
    return X, F, ranks


# ---------------------------------------------------------------------------
# NSGA-II on a crash-prone black box
# ---------------------------------------------------------------------------

def _objective_rows(evals, n_obj):
    F = np.full((len(evals), n_obj), np.inf)
    for i, e in enumerate(evals):
        if e.crash_ok:
            F[i] = e.objectives
    return F


def _reseed_crashed(X, F, bounds, rng):
    bad = ~np.all(np.isfinite(F), axis=1)
    if np.any(bad):
        X = X.copy()
        X[bad] = bounds.sample(rng, int(bad.sum()))
    return X


def run_nsga2(problem, config: GaConfig = GaConfig(), rng=None, budget_steps=None, *,
              max_evals=None, clock=time.perf_counter, workers: int = 1) -> RunRecord:
    """NSGA-II against ``problem`` until ``n_gen`` generations or the budget."""
    rng = rng_from(rng)
    bounds = problem.bounds
    tracker = RunTracker(problem, budget_steps, max_evals=max_evals, clock=clock,
                         workers=workers, config={"algorithm": "NSGA-II", **asdict(config)})
    if tracker.exhausted:
        tracker.note("budget allows no evaluations")
        return tracker.finish()
    X = bounds.sample(rng, config.n_pop)
    evals = tracker.evaluate(X, note="init")
    X = X[: len(evals)]
    F = _objective_rows(evals, problem.n_obj)
    ranks, crowd = rank_and_crowd(F)
    X = _reseed_crashed(X, F, bounds, rng)
    for gen in range(1, config.n_gen + 1):
        if tracker.exhausted or len(X) == 0:
            break
        C = _offspring(X, ranks, crowd, config, bounds, rng)
        evals = tracker.evaluate(C, note=f"gen {gen}")
        C = C[: len(evals)]
        FC = _objective_rows(evals, problem.n_obj)
        UX = np.vstack([X, C])
        UF = np.vstack([F, FC])
        ur, uc = rank_and_crowd(UF)
        keep = survivor_order(ur, uc)[: config.n_pop]
        X, F = UX[keep], UF[keep]
        ranks, crowd = rank_and_crowd(F)
        X = _reseed_crashed(X, F, bounds, rng)
    return tracker.finish()


# ---------------------------------------------------------------------------
# MOPSO
# ---------------------------------------------------------------------------

def constrained_winner(f_a, ok_a, f_b, ok_b, coin: float) -> int:
    """0 if ``a`` wins, 1 if ``b`` wins, under the crash-feasibility rule.

    Both feasible: the dominating one, ``coin`` decides if incomparable.
    One feasible: the feasible one.  Both crashed: ``coin`` decides, since
    a crash carries no violation magnitude.
    """
    if ok_a and ok_b:
        if dominates(f_a, f_b):
            return 0
        if dominates(f_b, f_a):
            return 1
        return int(coin < 0.5)
    if ok_a != ok_b:
        return 0 if ok_a else 1
    return int(coin < 0.5)


class AdaptiveGrid:
    """Hypercube partition of objective space for the MOPSO repository."""

    def __init__(self, divisions: int, inflation: float):
        self.divisions = divisions
        self.inflation = inflation
        self.lower = None
        self.upper = None

    def covers(self, F) -> bool:
        if self.lower is None:
            return False
        return bool(np.all(F >= self.lower) and np.all(F <= self.upper))

    def rebuild(self, F):
        lo, hi = F.min(axis=0), F.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        self.lower = lo - self.inflation * span
        self.upper = hi + self.inflation * span

    def update(self, F) -> bool:
        """Rebuild if a point lies outside the current grid; True if rebuilt."""
        if len(F) and not self.covers(F):
            self.rebuild(F)
            return True
        return False

    def cells(self, F) -> np.ndarray:
        F = np.atleast_2d(F)
        rel = (F - self.lower) / (self.upper - self.lower)
        idx = np.clip(np.floor(rel * self.divisions).astype(int), 0, self.divisions - 1)
        return np.ravel_multi_index(idx.T, (self.divisions,) * F.shape[1])


class Repository:
    """Bounded archive of mutually non-dominated feasible points."""

    def __init__(self, capacity: int, grid: AdaptiveGrid):
        self.capacity = capacity
        self.grid = grid
        self.X = np.empty((0, 0))
        self.F = np.empty((0, 0))

    def __len__(self):
        return self.X.shape[0]

    def add(self, X, F, rng):
        if len(X) == 0:
            return
        if len(self) == 0:
            UX, UF = np.asarray(X, float), np.asarray(F, float)
        else:
            UX, UF = np.vstack([self.X, X]), np.vstack([self.F, F])
        keep = nondominated_sort(UF) == 0
        UX, UF = UX[keep], UF[keep]
        # Exact duplicates in objective space add nothing; keep the first.
        _, first = np.unique(UF, axis=0, return_index=True)
        first = np.sort(first)
        self.X, self.F = UX[first], UF[first]
        self.grid.update(self.F)
        self._truncate(rng)

    def _truncate(self, rng):
        while len(self) > self.capacity:
            cells = self.grid.cells(self.F)
            ids, counts = np.unique(cells, return_counts=True)
            crowded = ids[counts == counts.max()]
            cell = crowded[rng.integers(len(crowded))] if len(crowded) > 1 else crowded[0]
            members = np.flatnonzero(cells == cell)
            drop = members[rng.integers(len(members))]
            self.X = np.delete(self.X, drop, axis=0)
            self.F = np.delete(self.F, drop, axis=0)

    def select_leaders(self, n: int, rng) -> np.ndarray:
        """Roulette over occupied cells with weight 10 / occupancy."""
        cells = self.grid.cells(self.F)
        ids, inverse, counts = np.unique(cells, return_inverse=True, return_counts=True)
        w = 10.0 / counts
        p = w / w.sum()
        chosen = rng.choice(len(ids), size=n, p=p)
        out = np.empty(n, dtype=int)
        for i, c in enumerate(chosen):
            members = np.flatnonzero(inverse == c)
            out[i] = members[rng.integers(len(members))]
        return self.X[out]


def run_mopso(problem, config: PsoConfig = PsoConfig(), rng=None, budget_steps=None, *,
              max_evals=None, clock=time.perf_counter, workers: int = 1) -> RunRecord:
    """Multi-objective PSO with an adaptive-grid repository."""
    rng = rng_from(rng)
    bounds = problem.bounds
    tracker = RunTracker(problem, budget_steps, max_evals=max_evals, clock=clock,
                         workers=workers, config={"algorithm": "MOPSO", **asdict(config)})
    if tracker.exhausted:
        tracker.note("budget allows no evaluations")
        return tracker.finish()
    n_obj = problem.n_obj
    X = bounds.sample(rng, config.n_pop)
    V = np.zeros_like(X)
    evals = tracker.evaluate(X, note="init")
    if len(evals) < len(X):
        return tracker.finish()
    F = _objective_rows(evals, n_obj)
    ok = np.all(np.isfinite(F), axis=1)
    pbest_X, pbest_F, pbest_ok = X.copy(), F.copy(), ok.copy()
    repo = Repository(config.n_rep, AdaptiveGrid(config.grid_divisions, config.grid_inflation))
    repo.add(X[ok], F[ok], rng)
    repo_sizes = [len(repo)]

    for gen in range(1, config.n_gen + 1):
        if tracker.exhausted:
            break
        n = len(X)
        if len(repo):
            leaders = repo.select_leaders(n, rng)
        else:
            tracker.note(f"gen {gen}: repository empty, leaders drawn from population")
            leaders = X[rng.integers(0, n, n)]
        r1 = rng.random(X.shape)
        r2 = rng.random(X.shape)
        V = (config.inertia * V + config.c_cognitive * r1 * (pbest_X - X)
             + config.c_social * r2 * (leaders - X))
        X = X + V

        pm = config.mutation_rate * (1.0 - (gen - 1) / max(config.n_gen - 1, 1))
        mutate = rng.random(n) < pm
        dims = rng.integers(0, bounds.dim, n)
        u = rng.random(n)
        for i in np.flatnonzero(mutate):
            d = dims[i]
            dx = pm * bounds.span[d]
            X[i, d] = X[i, d] - dx + 2.0 * dx * u[i]

        clipped = bounds.clip(X)
        V = np.where(clipped != X, 0.0, V)
        X = clipped

        coin = rng.random(n)
        evals = tracker.evaluate(X, note=f"gen {gen}")
        if len(evals) < n:
            break
        F = _objective_rows(evals, n_obj)
        ok = np.all(np.isfinite(F), axis=1)
        repo.add(X[ok], F[ok], rng)
        repo_sizes.append(len(repo))
        for i in range(n):
            if constrained_winner(pbest_F[i], pbest_ok[i], F[i], ok[i], coin[i]):
                pbest_X[i], pbest_F[i], pbest_ok[i] = X[i], F[i], ok[i]
    record = tracker.finish()
    record.config["repository_sizes"] = repo_sizes
    return record
