"""Crash-aware multi-objective Bayesian optimization.

The loop keeps one GP per objective.  Crashed evaluations enter the
training data either as pessimistic virtual data points (posterior mean
plus a growing multiple of the posterior deviation, bounded by the worst
successful value) or as a constant penalty.  New points come from
Thompson sampling with hypervolume-improvement selection (TSEMO) or from
maximizing the Euclidean expected-improvement-matrix criterion (EIM).
Batch sizes can adapt so that optimizer overhead stays a fixed fraction
of simulation time.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import gpr
from .core import BoxBounds, Dataset, ParetoFront, UsageError, current_front, dominates
from .metaheuristics import GaConfig, nsga2_minimize
from .metrics import hypervolume_improvement, prepare_front
from .tracking import RunRecord, RunTracker, rng_from

log = logging.getLogger(__name__)

TSEMO = "TSEMO"
EIM = "EIM"
ADAPTIVE = "adaptive"
CONSTANT = "constant"
VDP = "vdp"
PENALTY = "penalty"


class VdpInvariantError(RuntimeError):
    """A virtual data point dominated a member of the current front."""


@dataclass(frozen=True)
class MoboConfig:
    n_init: int = 5
    acquisition: str = TSEMO
    batch_mode: str = ADAPTIVE
    batch_size: int = 1
    p_overhead_desired: float = 0.2
    crash_handling: str = VDP
    penalty: Optional[tuple] = None
    gamma_init: float = 3.0
    gamma_step: float = 0.5
    max_gamma_escalations: int = 100
    ga_pop: int = 100
    ga_gen: int = 100
    rff_features: int = 500
    gp_restarts: int = 3
    eim_probes: int = 2000
    eim_starts: int = 5
    eim_iterations: int = 200
    # Replays recorded batch sizes; later iterations use the rule again.
    batch_schedule: Optional[tuple] = None

    def __post_init__(self):
        if self.n_init < 1:
            raise UsageError("n_init must be >= 1")
        if self.p_overhead_desired <= 0:
            raise UsageError("p_overhead_desired must be positive")
        if self.gamma_init <= 0:
            raise UsageError("gamma_init must be positive")
        if self.acquisition not in (TSEMO, EIM):
            raise UsageError(f"unknown acquisition {self.acquisition!r}")
        if self.batch_mode not in (ADAPTIVE, CONSTANT):
            raise UsageError(f"unknown batch mode {self.batch_mode!r}")
        if self.crash_handling not in (VDP, PENALTY):
            raise UsageError(f"unknown crash handling {self.crash_handling!r}")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")


# ---------------------------------------------------------------------------
# batch size
# ---------------------------------------------------------------------------

def calc_batch_size(t_overhead_prev: float, t_sim_prev: float, p_des: float) -> int:
    """Smallest batch whose simulation time covers the overhead at ratio ``p_des``."""
    if t_sim_prev <= 0 or p_des <= 0:
        raise UsageError("t_sim_prev and p_des must be positive")
    ratio = max(0.0, t_overhead_prev) / (p_des * t_sim_prev)
    # Guard against ratios like 10.000000000000002 from float division.
    r = round(ratio)
    if abs(ratio - r) <= 1e-9 * max(1.0, r):
        ratio = float(r)
    return max(1, int(math.ceil(ratio)))


# ---------------------------------------------------------------------------
# crash handling
# ---------------------------------------------------------------------------

def virtual_targets(mu, sigma, gamma: float, j_max) -> np.ndarray:
    """Pessimistic prediction ``mu + gamma * sigma`` bounded by ``j_max``."""
    return np.minimum(np.asarray(mu, float) + gamma * np.asarray(sigma, float),
                      np.asarray(j_max, float))


def _dominates_any(virtual: np.ndarray, front_points: np.ndarray) -> bool:
    for v in virtual:
        for f in front_points:
            if dominates(v, f):
                return True
    return False


@dataclass(frozen=True)
class VdpResult:
    targets: np.ndarray       # (n_crash, M)
    gamma: float
    escalations: int
    capped: bool = False


def compute_vdp(dataset: Dataset, front: ParetoFront, gamma_init: float = 3.0,
                gamma_step: float = 0.5, *, models: Optional[Sequence] = None,
                bounds: Optional[BoxBounds] = None, rng=None, restarts: int = 3,
                max_escalations: int = 100) -> VdpResult:
    """Virtual objective values for every crashed evaluation.

    ``models`` are per-objective GPs trained on the successes only; they
    are fitted here from ``dataset`` if not given (then ``bounds`` is
    required).  ``gamma`` grows by ``gamma_step`` until no virtual point
    dominates a front member.
    """
    if dataset.n_success < 1:
        raise UsageError("virtual data points need at least one success")
    Y = dataset.success_objectives()
    j_max = Y.max(axis=0)
    crashed = dataset.crash_indices()
    if crashed.size == 0:
        return VdpResult(np.empty((0, Y.shape[1])), gamma_init, 0)
    if models is None:
        if bounds is None:
            raise UsageError("bounds are needed to fit the models")
        X = dataset.thetas[dataset.success_indices()]
        rng = rng_from(rng)
        models = [gpr.fit(X, Y[:, m], bounds, restarts=restarts, rng=rng)
                  for m in range(Y.shape[1])]
    Xc = dataset.thetas[crashed]
    preds = [m.predict(Xc) for m in models]
    mu = np.column_stack([p[0] for p in preds])
    sigma = np.column_stack([p[1] for p in preds])
    front_pts = front.objective_points
    gamma = gamma_init
    for k in range(max_escalations + 1):
        targets = virtual_targets(mu, sigma, gamma, j_max)
        if not _dominates_any(targets, front_pts):
            return VdpResult(targets, gamma, k)
        if k < max_escalations:
            gamma += gamma_step
    log.warning("virtual data points still dominate after %d escalations; "
                "capping at the worst successful values", max_escalations)
    return VdpResult(np.tile(j_max, (crashed.size, 1)), gamma, max_escalations, capped=True)


def penalty_targets(dataset: Dataset, n_obj: int, penalty=None) -> np.ndarray:
    """Constant targets for crashed evaluations (worst success, or 1.0 without any)."""
    n_crash = dataset.crash_indices().size
    if penalty is not None:
        value = np.broadcast_to(np.asarray(penalty, float), (n_obj,))
    elif dataset.n_success:
        value = dataset.success_objectives().max(axis=0)
    else:
        value = np.ones(n_obj)
    return np.tile(value, (n_crash, 1))


# ---------------------------------------------------------------------------
# acquisitions
# ---------------------------------------------------------------------------

def selection_reference(success_objectives) -> np.ndarray:
    """Reference point for HV-improvement selection: worst success scaled by 1.1.

    Components whose worst value is not positive are moved out by a tenth
    of the observed range (or 0.1 if there is none) instead.
    """
    Y = np.asarray(success_objectives, float)
    worst = Y.max(axis=0)
    spread = worst - Y.min(axis=0)
    margin = np.where(worst > 0, 0.1 * worst, np.where(spread > 0, 0.1 * spread, 0.1))
    return worst + margin


def greedy_hv_selection(candidate_values, front_points, batch: int, ref_point,
                        rng: np.random.Generator) -> List[int]:
    """Indices of ``batch`` candidates chosen one by one for maximal HV gain.

    Candidates already selected count as front members for the next pick.
    When no remaining candidate improves the HV, one is drawn at random.
    Ties go to the lowest candidate index.

    A candidate's gain can only shrink as the front grows, so gains from
    earlier picks are upper bounds and only the leading candidates are
    re-evaluated (lazy greedy); the picks equal those of full re-evaluation.
    """
    F = np.asarray(candidate_values, float)
    ref_point = np.asarray(ref_point, float)
    current = prepare_front(np.asarray(front_points, float).reshape(-1, F.shape[1]), ref_point)
    gains = hypervolume_improvement(F, current, ref_point, prepared=True)
    # heap of (-gain bound, index, pick number at which the bound was computed)
    heap = [(-g, i, 0) for i, g in enumerate(gains)]
    heapq.heapify(heap)
    remaining = list(range(F.shape[0]))
    chosen = []
    for k in range(min(batch, F.shape[0])):
        while True:
            neg, j, when = heapq.heappop(heap)
            if when == k:
                break
            g = hypervolume_improvement(F[j:j + 1], current, ref_point, prepared=True)[0]
            heapq.heappush(heap, (-g, j, k))
        if -neg <= 0:
            # Bounds only fall, so every remaining gain is zero from here on.
            heapq.heappush(heap, (neg, j, when))
            j = remaining[int(rng.integers(len(remaining)))]
            heap = [e for e in heap if e[1] != j]
            heapq.heapify(heap)
        chosen.append(j)
        remaining.remove(j)
        # Keep ``current`` equal to prepare_front() of the front plus all picks.
        c = F[j]
        if np.all(c < ref_point) and not np.any(np.all(current <= c, axis=1)):
            current = np.vstack([current[~np.all(c <= current, axis=1)], c])
    return chosen


def tsemo_propose(models: Sequence, front: ParetoFront, batch: int, ref_point,
                  rng: np.random.Generator, bounds: BoxBounds,
                  ga: GaConfig = GaConfig(n_pop=100, n_gen=100),
                  n_features: int = 500):
    """Thompson-sampling proposals selected by hypervolume improvement.

    Returns ``(thetas, sampled_values, fallback)``; ``fallback`` is True when
    the sampled landscape was flat and random points were returned.
    """
    if batch < 1:
        raise UsageError("batch must be >= 1")
    draws = [gpr.sample_posterior(m, n_features, rng) for m in models]

    def sampled(X):
        return np.column_stack([d(X, fast=True) for d in draws])

    pop = max(ga.n_pop, batch + batch % 2)     # NSGA-II needs an even population
    cfg = GaConfig(n_pop=pop, n_gen=ga.n_gen, mutation_scale=ga.mutation_scale,
                   mutation_prob=ga.mutation_prob)
    X, F, _ = nsga2_minimize(sampled, bounds, cfg, rng)
    if not np.all(np.isfinite(F)) or np.all(np.ptp(F, axis=0) <= 1e-12 * (1 + np.abs(F).max(axis=0))):
        log.info("sampled landscape is degenerate; proposing random points")
        return bounds.sample(rng, batch), None, True
    idx = greedy_hv_selection(F, front.objective_points, batch, ref_point, rng)
    return X[idx], F[idx], False


def expected_improvement(mu, sigma, best) -> np.ndarray:
    """EI for minimization below ``best``; zero deviation gives max(best - mu, 0)."""
    mu, sigma, best = np.broadcast_arrays(np.asarray(mu, float), np.asarray(sigma, float),
                                          np.asarray(best, float))
    diff = best - mu
    out = np.array(np.maximum(diff, 0.0))
    pos = sigma > 0
    z = diff[pos] / sigma[pos]
    out[pos] = diff[pos] * ndtr(z) + sigma[pos] * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    return np.maximum(out, 0.0)


def eim_euclidean(mu, sigma, front_points) -> np.ndarray:
    """min over front points of the Euclidean norm of per-objective EIs.

    ``mu`` and ``sigma`` are (n, M); returns (n,).
    """
    mu = np.atleast_2d(np.asarray(mu, float))
    sigma = np.atleast_2d(np.asarray(sigma, float))
    P = np.atleast_2d(np.asarray(front_points, float))
    ei = expected_improvement(mu[:, None, :], sigma[:, None, :], P[None, :, :])
    return np.min(np.sqrt(np.sum(ei * ei, axis=2)), axis=1)


def _predict_all(models, X):
    preds = [m.predict(X) for m in models]
    return (np.column_stack([p[0] for p in preds]), np.column_stack([p[1] for p in preds]))


def eim_propose(models: Sequence, front: ParetoFront, rng: np.random.Generator,
                bounds: BoxBounds, n_probes: int = 2000, n_starts: int = 5,
                iterations: int = 200) -> np.ndarray:
    """Maximize the EIM criterion: random probes, then coordinate pattern search."""
    if front.is_empty:
        raise UsageError("EIM needs a non-empty front")
    P = front.objective_points

    def crit(X):
        mu, sd = _predict_all(models, X)
        return eim_euclidean(mu, sd, P)

    probes = bounds.sample(rng, n_probes)
    values = crit(probes)
    order = np.argsort(-values, kind="stable")[:n_starts]
    X = probes[order].copy()
    best = values[order].copy()
    step = np.tile(0.1 * bounds.span, (len(X), 1))
    dim = bounds.dim
    eye = np.eye(dim)
    for _ in range(iterations):
        active = np.any(step > 1e-6 * bounds.span, axis=1)
        if not np.any(active):
            break
        moves = np.concatenate([eye, -eye])           # (2N, N)
        trial = X[:, None, :] + moves[None] * step[:, None, :]
        trial = bounds.clip(trial.reshape(-1, dim)).reshape(len(X), 2 * dim, dim)
        tv = crit(trial.reshape(-1, dim)).reshape(len(X), 2 * dim)
        j = np.argmax(tv, axis=1)
        gain = tv[np.arange(len(X)), j]
        improved = (gain > best) & active
        X[improved] = trial[improved, j[improved]]
        best[improved] = gain[improved]
        step[~improved & active] *= 0.5
    k = int(np.argmax(best))
    return X[k]


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

@dataclass
class IterationData:
    """Training set handed to the surrogates at one iteration (for auditing)."""

    index: int
    thetas: np.ndarray
    targets: np.ndarray
    n_success: int
    n_crash: int
    gamma: Optional[float]
    front_points: np.ndarray
    virtual_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))


def _fit_models(X, Y, bounds, restarts, rng, warm):
    models = []
    for m in range(Y.shape[1]):
        model = gpr.fit(X, Y[:, m], bounds, restarts=restarts, rng=rng,
                        init=warm[m] if warm else None)
        models.append(model)
    return models


def run_mobo(problem, config: MoboConfig = MoboConfig(), rng=None, budget_steps=None, *,
             max_evals=None, clock=time.perf_counter, workers: int = 1,
             observer: Optional[Callable[[IterationData], None]] = None) -> RunRecord:
    """Bayesian optimization with crash handling until the budget is spent.

    ``observer`` receives the training data of every model-based iteration.
    Raises :class:`VdpInvariantError` if a virtual point ever dominates a
    front member.
    """
    rng = rng_from(rng)
    bounds = problem.bounds
    n_obj = problem.n_obj
    cfg_dict = {"algorithm": "MOBO", **asdict(config)}
    tracker = RunTracker(problem, budget_steps, max_evals=max_evals, clock=clock,
                         workers=workers, config=cfg_dict)
    if tracker.exhausted:
        tracker.note("budget allows no evaluations")
        return tracker.finish()

    tracker.evaluate(bounds.sample(rng, config.n_init), note="init")
    if tracker.dataset.n_success == 0 and not tracker.exhausted:
        tracker.note("all initial samples crashed; sampling until the first success")
        while tracker.dataset.n_success == 0 and not tracker.exhausted:
            tracker.evaluate(bounds.sample(rng, 1), note="init")

    ga = GaConfig(n_pop=config.ga_pop, n_gen=config.ga_gen)
    warm_success: Optional[list] = None
    warm_train: Optional[list] = None
    k = 0
    while not tracker.exhausted:
        k += 1
        ds = tracker.dataset
        front = current_front(ds)
        ok = ds.success_indices()
        crashed = ds.crash_indices()
        X_all = ds.thetas
        Y_ok = ds.success_objectives()

        gamma = None
        virtual = np.empty((0, n_obj))
        models = None
        if crashed.size and config.crash_handling == VDP:
            models = _fit_models(X_all[ok], Y_ok, bounds, config.gp_restarts, rng, warm_success)
            warm_success = [m.hyper for m in models]
            res = compute_vdp(ds, front, config.gamma_init, config.gamma_step, models=models,
                              max_escalations=config.max_gamma_escalations)
            if res.capped:
                tracker.note(f"iteration {k}: virtual points capped at the worst successes")
            if _dominates_any(res.targets, front.objective_points):
                raise VdpInvariantError(f"iteration {k}: a virtual point dominates the front")
            virtual, gamma = res.targets, res.gamma
        elif crashed.size:
            virtual = penalty_targets(ds, n_obj, config.penalty)

        if crashed.size:
            X_train = np.vstack([X_all[ok], X_all[crashed]])
            Y_train = np.vstack([Y_ok, virtual])
            models = _fit_models(X_train, Y_train, bounds, config.gp_restarts, rng, warm_train)
        else:
            X_train, Y_train = X_all[ok], Y_ok
            models = _fit_models(X_train, Y_train, bounds, config.gp_restarts, rng, warm_train)
        warm_train = [m.hyper for m in models]

        if observer is not None:
            observer(IterationData(k, X_train, Y_train, int(ok.size), int(crashed.size),
                                   gamma, front.objective_points.copy(), virtual))

        batch = _next_batch_size(config, k, tracker)
        if config.acquisition == EIM:
            thetas = eim_propose(models, front, rng, bounds, config.eim_probes,
                                 config.eim_starts, config.eim_iterations)[None, :]
            note = "eim"
        else:
            ref = selection_reference(Y_ok)
            thetas, _, fallback = tsemo_propose(models, front, batch, ref, rng, bounds, ga,
                                                config.rff_features)
            note = "tsemo-random-fallback" if fallback else "tsemo"
            if fallback:
                tracker.note(f"iteration {k}: degenerate sampled landscape, random batch")
        tracker.evaluate(thetas, gamma=gamma, front=front.objective_points.tolist(),
                         note=note, requested=batch)
    return tracker.finish()


def _next_batch_size(config: MoboConfig, k: int, tracker: RunTracker) -> int:
    if config.acquisition == EIM:
        return 1
    if config.batch_schedule is not None and k <= len(config.batch_schedule):
        return int(config.batch_schedule[k - 1])
    if config.batch_mode == CONSTANT:
        return config.batch_size
    prev = tracker.last_trace
    return calc_batch_size(prev.overhead_seconds, max(prev.mean_eval_seconds, 1e-9),
                           config.p_overhead_desired)
