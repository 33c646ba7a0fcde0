"""Cross-variant comparison and plot-ready data files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..benchmarks.vehicle import VehicleConfig, simulate_vehicle
from ..core import UsageError, current_front
from ..metrics import HvCurve, step_grid, wilcoxon_one_sided
from ..tracking import RunRecord
from .persistence import write_columns


@dataclass
class Comparison:
    variants: List[str]
    grid: np.ndarray
    medians: Dict[str, np.ndarray]
    best: List[str]
    p_values: Dict[str, np.ndarray]
    worse: Dict[str, np.ndarray]
    alpha: float

    def final_summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "final_step": float(self.grid[-1]),
            "best_variant": self.best[-1],
            "median_hv": {v: float(self.medians[v][-1]) for v in self.variants},
            "p_value_vs_best": {v: float(self.p_values[v][-1]) for v in self.variants},
            "significantly_worse": {v: bool(self.worse[v][-1]) for v in self.variants},
            "points_significantly_worse": {v: int(self.worse[v].sum()) for v in self.variants},
        }


def hv_matrix(records: Sequence[RunRecord], ref, grid) -> np.ndarray:
    """(n_seeds, n_grid) HV values, aligned by last observation carried forward."""
    return np.array([r.hv_curve(ref).at(grid) for r in records]).reshape(len(records), len(grid))


def compare(records_by_variant: Dict[str, Sequence[RunRecord]], ref, budget_steps: float,
            alpha: float = 0.05, n_points: int = 100,
            grid: Optional[np.ndarray] = None) -> Comparison:
    """Median HV per variant and one-sided rank-sum tests against the best.

    At each grid point the variant with the highest median is the best (ties
    go to the earlier variant); every other variant is flagged when its HV
    values are significantly smaller than the best's.
    """
    variants = list(records_by_variant)
    if len(variants) < 2:
        raise UsageError("comparison needs at least two variants")
    counts = {len(records_by_variant[v]) for v in variants}
    if len(counts) != 1 or 0 in counts:
        raise UsageError("all variants need the same, non-zero number of seeds")
    grid = step_grid(budget_steps, n_points) if grid is None else np.asarray(grid, float)
    values = {v: hv_matrix(records_by_variant[v], ref, grid) for v in variants}
    medians = {v: np.median(values[v], axis=0) for v in variants}
    best, p_values, worse = [], {v: np.ones(len(grid)) for v in variants}, \
        {v: np.zeros(len(grid), dtype=bool) for v in variants}
    for g in range(len(grid)):
        meds = [medians[v][g] for v in variants]
        b = variants[int(np.argmax(meds))]
        best.append(b)
        for v in variants:
            if v == b:
                continue
            res = wilcoxon_one_sided(values[v][:, g], values[b][:, g], alpha)
            p_values[v][g] = res.p_value
            worse[v][g] = res.significant
    return Comparison(variants, grid, medians, best, p_values, worse, alpha)


def write_comparison(comp: Comparison, directory) -> List[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = ["step"] + [f"median_{v}" for v in comp.variants] + ["best"] \
        + [f"worse_{v}" for v in comp.variants] + [f"p_{v}" for v in comp.variants]
    cols = [comp.grid] + [comp.medians[v] for v in comp.variants] + [np.array(comp.best)] \
        + [comp.worse[v] for v in comp.variants] + [comp.p_values[v] for v in comp.variants]
    table = d / "comparison.csv"
    write_columns(table, header, *cols)
    summary = d / "comparison.json"
    summary.write_text(json.dumps(comp.final_summary(), sort_keys=True, indent=1) + "\n")
    return [table, summary]


def _median_locf(xs: Sequence[np.ndarray], ys: Sequence[np.ndarray], grid) -> np.ndarray:
    rows = [HvCurve(x, y).at(grid) if len(x) else np.zeros(len(grid)) for x, y in zip(xs, ys)]
    return np.median(np.array(rows), axis=0) if rows else np.zeros(len(grid))


def front_table(record: RunRecord):
    """Rows (eval index, objectives..., theta...) of the final feasible front."""
    ds = record.dataset
    if len(ds) == 0 or ds.n_success == 0:
        return np.empty(0, dtype=int), np.empty((0, 0)), np.empty((0, 0))
    front = current_front(ds)
    idx = np.asarray(front.member_indices, dtype=int)
    return idx, front.objective_points, ds.thetas[idx]


def default_trajectory_picks(record: RunRecord) -> List[int]:
    """Front members minimizing each objective, without repeats."""
    idx, pts, _ = front_table(record)
    picks = []
    for m in range(pts.shape[1] if pts.size else 0):
        i = int(idx[int(np.argmin(pts[:, m]))])
        if i not in picks:
            picks.append(i)
    return picks


def emit_plot_data(records_by_variant: Dict[str, Sequence[RunRecord]], ref, budget_steps,
                   directory, *, seeds: Sequence[int], comparison: Optional[Comparison] = None,
                   vehicle_config: Optional[VehicleConfig] = None,
                   trajectories: Sequence[tuple] = (), n_points: int = 100) -> List[Path]:
    """Write HV series, overhead series, fronts and (vehicle only) trajectory logs.

    ``trajectories`` lists ``(variant, seed, evaluation index)``; with the
    vehicle problem and no explicit picks, the per-objective best front
    members of the first seed of the best variant are exported.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    variants = list(records_by_variant)
    grid = step_grid(budget_steps, n_points)
    if comparison is None and len(variants) >= 2:
        comparison = compare(records_by_variant, ref, budget_steps, n_points=n_points)

    for v in variants:
        recs = records_by_variant[v]
        vals = hv_matrix(recs, ref, grid)
        q25, med, q75 = np.percentile(vals, [25, 50, 75], axis=0)
        flags = comparison.worse[v] if comparison is not None else np.zeros(len(grid), bool)
        p = d / f"hv_{v}.csv"
        write_columns(p, ("step", "median", "q25", "q75", "significantly_worse"),
                      grid, med, q25, q75, flags)
        written.append(p)

        curves = [r.relative_overhead_curve() for r in recs]
        ov = _median_locf([c[0] for c in curves], [c[1] for c in curves], grid)
        p = d / f"overhead_{v}.csv"
        write_columns(p, ("step", "median_relative_overhead"), grid, ov)
        written.append(p)

        rows = []
        for s, r in zip(seeds, recs):
            idx, pts, th = front_table(r)
            for i, f, t in zip(idx, pts, th):
                rows.append([s, int(i), *f, *t])
        n_obj = len(ref)
        n_dim = len(rows[0]) - 2 - n_obj if rows else 0
        header = ["seed", "eval_index"] + [f"J{m + 1}" for m in range(n_obj)] \
            + [f"theta{k + 1}" for k in range(n_dim)]
        p = d / f"front_{v}.csv"
        arr = np.array(rows, dtype=object).T if rows else [[] for _ in header]
        write_columns(p, header, *arr)
        written.append(p)

    if vehicle_config is not None:
        picks = list(trajectories)
        if not picks and variants:
            best = comparison.best[-1] if comparison is not None else variants[0]
            rec0 = records_by_variant[best][0]
            picks = [(best, seeds[0], i) for i in default_trajectory_picks(rec0)]
        for v, s, i in picks:
            rec = records_by_variant[v][list(seeds).index(int(s))]
            theta = rec.evaluations[int(i)].theta
            sim = simulate_vehicle(theta, vehicle_config)
            p = d / f"trajectory_{v}_seed{s}_eval{i}.csv"
            sim.log.write_csv(p)
            written.append(p)
    return written
