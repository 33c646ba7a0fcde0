"""Hypervolume, step accounting, median curves and the rank-sum test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata


# ---------------------------------------------------------------------------
# hypervolume
# ---------------------------------------------------------------------------

def _contributing(points, ref) -> np.ndarray:
    ref = np.asarray(ref, dtype=float)
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.empty((0, ref.size))
    P = P.reshape(-1, ref.size)
    return P[np.all(P < ref, axis=1)]


def _nondominated(P: np.ndarray) -> np.ndarray:
    if P.shape[0] <= 1:
        return P
    P = np.unique(P, axis=0)
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    return P[~np.any(le & lt, axis=0)]


def _hv_sweep_2d(P: np.ndarray, ref: np.ndarray) -> float:
    if P.shape[0] == 0:
        return 0.0
    order = np.lexsort((P[:, 1], P[:, 0]))
    hv = 0.0
    y_best = ref[1]
    for x, y in P[order]:
        if y < y_best:
            hv += (ref[0] - x) * (y_best - y)
            y_best = y
    return float(hv)


def _hv_slice(P: np.ndarray, ref: np.ndarray, use_sweep: bool) -> float:
    m = P.shape[1]
    if P.shape[0] == 0:
        return 0.0
    if m == 1:
        return float(ref[0] - P[:, 0].min())
    if m == 2 and use_sweep:
        return _hv_sweep_2d(P, ref)
    P = P[np.argsort(P[:, -1], kind="stable")]
    hv = 0.0
    n = P.shape[0]
    for i in range(n):
        upper = P[i + 1, -1] if i + 1 < n else ref[-1]
        depth = upper - P[i, -1]
        if depth <= 0.0:
            continue
        base = _nondominated(P[: i + 1, :-1])
        hv += depth * _hv_slice(base, ref[:-1], use_sweep)
    return float(hv)


def hypervolume(points, ref) -> float:
    """Exact dominated volume of ``points`` bounded by ``ref`` (minimization).

    Points that do not strictly dominate ``ref`` contribute nothing.
    Two objectives use a sweep; three and four use recursive slicing.
    """
    ref = np.asarray(ref, dtype=float)
    m = ref.size
    if m < 2 or m > 4:
        raise ValueError(f"hypervolume supports 2 to 4 objectives, got {m}")
    P = _contributing(points, ref)
    if P.shape[0] == 0:
        return 0.0
    P = _nondominated(P)
    if m == 2:
        return _hv_sweep_2d(P, ref)
    return _hv_slice(P, ref, use_sweep=True)


def hypervolume_slicing(points, ref) -> float:
    """Pure slicing down to one dimension; independent of the 2-D sweep."""
    ref = np.asarray(ref, dtype=float)
    P = _contributing(points, ref)
    if P.shape[0] == 0:
        return 0.0
    return _hv_slice(_nondominated(P), ref, use_sweep=False)


def prepare_front(front, ref) -> np.ndarray:
    """Rows of ``front`` that bound volume below ``ref``, minus dominated and duplicate rows."""
    F = _contributing(front, ref)
    return _nondominated(F) if F.shape[0] else F


def hypervolume_improvement(candidates, front, ref, *, prepared: bool = False) -> np.ndarray:
    """HV gain of adding each candidate (row) individually to ``front``.

    With ``prepared=True`` the front is taken as already filtered by
    :func:`prepare_front`, which saves the filtering on repeated calls.
    """
    ref = np.asarray(ref, dtype=float)
    C = np.asarray(candidates, dtype=float).reshape(-1, ref.size)
    if prepared:
        F = np.asarray(front, dtype=float).reshape(-1, ref.size)
    else:
        F = prepare_front(front, ref)
    out = np.zeros(C.shape[0])
    for i, c in enumerate(C):
        if np.any(c >= ref):
            continue
        if F.shape[0] and np.any(np.all(F <= c, axis=1)):
            continue
        box = float(np.prod(ref - c))
        if F.shape[0] == 0:
            out[i] = box
            continue
        # Volume already covered inside [c, ref] is the HV of the clipped front.
        clipped = np.maximum(F, c)
        out[i] = box - hypervolume(clipped, ref) if ref.size > 1 else box
    return np.maximum(out, 0.0)


def hypervolume_mc(points, ref, n_samples: int, rng: np.random.Generator,
                   chunk: int = 200_000):
    """Monte-Carlo estimate of the dominated volume and its standard error.

    Samples uniformly in the box spanned by the componentwise minimum of
    the contributing points and ``ref``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ref = np.asarray(ref, dtype=float)
    P = _contributing(points, ref)
    if P.shape[0] == 0:
        return 0.0, 0.0
    lo = P.min(axis=0)
    span = ref - lo
    volume = float(np.prod(span))
    if volume <= 0.0:
        return 0.0, 0.0
    hits = 0
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        Z = lo + rng.random((k, ref.size)) * span
        dom = np.zeros(k, dtype=bool)
        for p in P:
            dom |= np.all(Z >= p, axis=1)
        hits += int(dom.sum())
        done += k
    frac = hits / n_samples
    se = volume * math.sqrt(max(frac * (1.0 - frac), 0.0) / n_samples)
    return volume * frac, se


# ---------------------------------------------------------------------------
# step accounting
# ---------------------------------------------------------------------------

def overhead_to_steps(overhead_seconds: float, seconds_per_step: float) -> int:
    """Express optimizer compute time as equivalent simulation steps (ceil)."""
    if seconds_per_step <= 0:
        raise ValueError("seconds_per_step must be positive")
    if overhead_seconds <= 0:
        return 0
    ratio = overhead_seconds / seconds_per_step
    # Guard against 4000.0000000001-style rounding pushing ceil up by one.
    return int(math.ceil(ratio - 1e-9 * max(1.0, ratio)))


@dataclass(frozen=True)
class HvCurve:
    """HV after each commit, against cumulative steps (overhead included)."""

    steps: np.ndarray
    hv: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.steps, dtype=float)
        h = np.asarray(self.hv, dtype=float)
        if s.shape != h.shape or s.ndim != 1:
            raise ValueError("steps and hv must be 1-D arrays of equal length")
        if s.size > 1 and np.any(np.diff(s) < 0):
            raise ValueError("steps must be non-decreasing")
        object.__setattr__(self, "steps", s)
        object.__setattr__(self, "hv", h)

    def at(self, grid) -> np.ndarray:
        """Last observation carried forward onto ``grid``; 0 before the first."""
        grid = np.asarray(grid, dtype=float)
        if self.steps.size == 0:
            return np.zeros(grid.shape)
        idx = np.searchsorted(self.steps, grid, side="right") - 1
        out = np.where(idx >= 0, self.hv[np.clip(idx, 0, None)], 0.0)
        return out


def step_grid(budget_steps: float, n_points: int = 100, start: float = 1.0) -> np.ndarray:
    """Logarithmically spaced integer grid ending at the budget."""
    start = max(1.0, min(float(start), float(budget_steps)))
    g = np.geomspace(start, float(budget_steps), n_points)
    return np.unique(np.round(g))


def median_hv_curve(runs: Sequence[HvCurve], grid=None) -> HvCurve:
    """Pointwise median across runs after LOCF alignment to a common grid."""
    if len(runs) == 0:
        raise ValueError("need at least one curve")
    if grid is None:
        grid = np.unique(np.concatenate([r.steps for r in runs]))
    grid = np.asarray(grid, dtype=float)
    values = np.vstack([r.at(grid) for r in runs])
    return HvCurve(grid, np.median(values, axis=0))


# ---------------------------------------------------------------------------
# one-sided Wilcoxon rank-sum test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StatTestResult:
    p_value: float
    significant: bool
    alpha: float
    direction: str = "a < b"
    statistic: float = float("nan")
    method: str = ""


@lru_cache(maxsize=256)
def _rank_sum_counts(n: int, k: int) -> tuple:
    """Number of k-subsets of {1..n} for each possible rank sum."""
    max_sum = sum(range(n - k + 1, n + 1))
    # counts[j][s]: subsets of size j from the ranks seen so far with sum s
    counts = [[0] * (max_sum + 1) for _ in range(k + 1)]
    counts[0][0] = 1
    for r in range(1, n + 1):
        for j in range(min(k, r), 0, -1):
            row, prev = counts[j], counts[j - 1]
            for s in range(max_sum, r - 1, -1):
                if prev[s - r]:
                    row[s] += prev[s - r]
    return tuple(counts[k])


def wilcoxon_one_sided(a, b, alpha: float = 0.05) -> StatTestResult:
    """Rank-sum test of H1: ``a`` is stochastically smaller than ``b``.

    Exact null distribution for at most 20 observations without ties;
    otherwise the normal approximation with tie and continuity correction.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.size, b.size
    if na < 1 or nb < 1:
        raise ValueError("both samples need at least one observation")
    n = na + nb
    ranks = rankdata(np.concatenate([a, b]))
    w = float(ranks[:na].sum())
    _, tie_counts = np.unique(ranks, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))

    if not has_ties and n <= 20:
        counts = _rank_sum_counts(n, na)
        w_int = int(round(w))
        p = sum(counts[: w_int + 1]) / math.comb(n, na)
        method = "exact"
    else:
        mean = na * (n + 1) / 2.0
        tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
        var = na * nb / 12.0 * ((n + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = (w - mean + 0.5) / math.sqrt(var)
            p = float(ndtr(z))
        method = "normal"
    p = min(max(p, 0.0), 1.0)
    return StatTestResult(p_value=p, significant=p < alpha, alpha=alpha,
                          statistic=w, method=method)
