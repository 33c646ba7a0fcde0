"""Experiment matrix: one problem, several variants, several seeds."""

from __future__ import annotations

import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..core import UsageError
from ..tracking import RunRecord, SteppingClock
from .persistence import PartialLog, load_meta, load_record, save_record, seed_dir
from .registry import VARIANTS, get_variant, make_problem

log = logging.getLogger(__name__)

DEFAULT_SEEDS = tuple(range(10))


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run and where to store it.

    ``clock`` is ``"wall"`` for measured overhead or ``"stepping"`` for a
    deterministic clock (timing-independent adaptive batch sizes).
    """

    problem: str
    variants: Tuple[str, ...]
    budget_steps: Optional[int] = None
    out: str = "runs"
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    problem_params: dict = field(default_factory=dict)
    max_evals: Optional[int] = None
    workers: int = 1
    jobs: int = 1
    clock: str = "wall"
    variant_options: Dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.variants:
            raise UsageError("at least one variant is required")
        for v in self.variants:
            get_variant(v)
        if len(set(self.variants)) != len(self.variants):
            raise UsageError("duplicate variant names")
        if self.budget_steps is not None and self.budget_steps < 0:
            raise UsageError("budget_steps must be >= 0")
        if self.clock not in ("wall", "stepping"):
            raise UsageError("clock must be 'wall' or 'stepping'")
        unknown = set(self.variant_options) - set(VARIANTS)
        if unknown:
            raise UsageError(f"options given for unknown variants: {sorted(unknown)}")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def signature(self, variant: str) -> dict:
        """Settings that determine a seed's result (used for resuming)."""
        return {
            "problem": self.problem,
            "problem_params": self.problem_params,
            "variant": variant,
            "budget_steps": self.budget_steps,
            "max_evals": self.max_evals,
            "clock": self.clock,
            "options": self.variant_options.get(variant, {}),
        }


@dataclass
class SeedOutcome:
    variant: str
    seed: int
    status: str
    directory: str
    resumed: bool = False
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "complete"


def _clock(kind: str):
    return SteppingClock() if kind == "stepping" else time.perf_counter


def run_seed(config: ExperimentConfig, variant: str, seed: int) -> SeedOutcome:
    """Run (or resume) one seed; failures are recorded, never raised."""
    d = seed_dir(config.out, config.problem, variant, seed)
    sig = config.signature(variant)
    meta = load_meta(d)
    if meta and meta.get("status") == "complete" and meta.get("experiment") == json.loads(json.dumps(sig)):
        return SeedOutcome(variant, seed, "complete", str(d), resumed=True)

    problem = make_problem(config.problem, config.problem_params)
    if config.budget_steps == 0:
        rec = RunRecord(config={"variant": variant}, status="complete",
                        notes=["budget is zero; no evaluations were run"])
        save_record(rec, d, sig, problem.reference_point)
        log.warning("%s seed %d: zero budget, empty record", variant, seed)
        return SeedOutcome(variant, seed, "complete", str(d), message=rec.notes[0])

    partial = PartialLog(d)
    base_func = problem.func

    def logged(theta):
        e = base_func(theta)
        partial.append(e)
        return e

    logged_problem = replace(problem, func=logged)
    try:
        rec = get_variant(variant).run(
            logged_problem, seed, config.budget_steps, max_evals=config.max_evals,
            clock=_clock(config.clock), workers=config.workers,
            options=config.variant_options.get(variant))
    except Exception as exc:  # noqa: BLE001 - isolate the failing seed
        msg = f"{type(exc).__name__}: {exc}"
        log.error("%s seed %d failed: %s", variant, seed, msg)
        evals = partial.read()
        rec = RunRecord(config={"variant": variant}, evaluations=evals,
                        batch_of=list(range(len(evals))), status="failed",
                        notes=[msg, traceback.format_exc()])
        save_record(rec, d, sig)
        return SeedOutcome(variant, seed, "failed", str(d), message=msg)
    save_record(rec, d, sig, problem.reference_point)
    return SeedOutcome(variant, seed, rec.status, str(d))


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config: ExperimentConfig) -> List[SeedOutcome]:
    """Every (variant, seed) of the matrix, optionally on parallel processes."""
    if config.budget_steps is None and config.max_evals is None:
        raise UsageError("set budget_steps or max_evals")
    tasks = [(config, v, s) for v in config.variants for s in config.seeds]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_run_seed_args, tasks))
    return [run_seed(*t) for t in tasks]


def load_records(out, problem: str, variant: str, seeds) -> List[RunRecord]:
    recs = []
    for s in seeds:
        d = seed_dir(out, problem, variant, s)
        if not (Path(d) / "meta.json").exists():
            raise UsageError(f"no record for {variant} seed {s} under {out}")
        recs.append(load_record(d))
    return recs
