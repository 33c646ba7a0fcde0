"""Named optimizer variants and benchmark problems."""

from __future__ import annotations

import time
from dataclasses import dataclass, fields, replace
from typing import Callable, Dict

from ..baselines import GridSpec, run_grid, run_random
from ..benchmarks import (crash_dtlz2, crash_zdt1, synthetic_dtlz2_3obj, synthetic_zdt1,
                          vehicle_problem)
from ..benchmarks.vehicle import VehicleConfig, load_vehicle_config
from ..core import UsageError
from ..metaheuristics import GaConfig, PsoConfig, run_mopso, run_nsga2
from ..mobo import ADAPTIVE, CONSTANT, EIM, PENALTY, TSEMO, VDP, MoboConfig, run_mobo
from ..tracking import RunRecord


@dataclass(frozen=True)
class Variant:
    name: str
    family: str            # "mobo", "nsga2", "mopso", "random", "grid"
    defaults: object       # config dataclass instance (or None)
    description: str

    def configure(self, overrides: dict | None = None):
        if not overrides:
            return self.defaults
        if self.defaults is None:
            raise UsageError(f"variant {self.name} takes no options")
        allowed = {f.name for f in fields(self.defaults)}
        unknown = set(overrides) - allowed
        if unknown:
            raise UsageError(f"unknown options for {self.name}: {sorted(unknown)}")
        return replace(self.defaults, **overrides)

    def run(self, problem, seed: int, budget_steps=None, *, max_evals=None,
            clock=time.perf_counter, workers: int = 1, options: dict | None = None,
            batch_size: int = 1) -> RunRecord:
        cfg = self.configure(options)
        kw = dict(max_evals=max_evals, clock=clock, workers=workers)
        if self.family == "mobo":
            rec = run_mobo(problem, cfg, seed, budget_steps, **kw)
        elif self.family == "nsga2":
            rec = run_nsga2(problem, cfg, seed, budget_steps, **kw)
        elif self.family == "mopso":
            rec = run_mopso(problem, cfg, seed, budget_steps, **kw)
        elif self.family == "random":
            rec = run_random(problem, budget_steps, seed, batch_size=batch_size, **kw)
        elif self.family == "grid":
            rec = run_grid(problem, cfg, budget_steps, batch_size=batch_size, **kw)
        else:
            raise UsageError(f"unknown family {self.family}")
        rec.config["variant"] = self.name
        return rec


def _mobo(acq, mode, crash):
    return MoboConfig(acquisition=acq, batch_mode=mode, batch_size=1, crash_handling=crash)


VARIANTS: Dict[str, Variant] = {v.name: v for v in [
    Variant("TSEMO-1-C", "mobo", _mobo(TSEMO, CONSTANT, PENALTY),
            "TSEMO, one evaluation per iteration, constant crash penalty"),
    Variant("TSEMO-A-C", "mobo", _mobo(TSEMO, ADAPTIVE, PENALTY),
            "TSEMO, adaptive batch size, constant crash penalty"),
    Variant("TSEMO-1-VDP", "mobo", _mobo(TSEMO, CONSTANT, VDP),
            "TSEMO, one evaluation per iteration, virtual data points"),
    Variant("TSEMO-A-VDP", "mobo", _mobo(TSEMO, ADAPTIVE, VDP),
            "TSEMO, adaptive batch size, virtual data points"),
    Variant("EIM-1-VDP", "mobo", _mobo(EIM, CONSTANT, VDP),
            "Euclidean expected-improvement matrix, one evaluation per iteration, virtual data points"),
    Variant("NSGA-II", "nsga2", GaConfig(), "NSGA-II, population 100"),
    Variant("MOPSO", "mopso", PsoConfig(), "MOPSO with adaptive-grid repository"),
    Variant("Rand", "random", None, "uniform random search"),
    Variant("Grid", "grid", GridSpec(), "full factorial grid, 6 levels per dimension"),
]}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise UsageError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None


def _vehicle(params: dict):
    cfg_file = params.get("config_file")
    base = load_vehicle_config(cfg_file) if cfg_file else load_vehicle_config()
    overrides = {k: v for k, v in params.items() if k != "config_file"}
    if overrides:
        base = VehicleConfig.from_dict({**base.to_dict(), **overrides})
    return vehicle_problem(base)


PROBLEMS: Dict[str, Callable[[dict], object]] = {
    "zdt1": lambda p: synthetic_zdt1(**p),
    "dtlz2": lambda p: synthetic_dtlz2_3obj(**p),
    "zdt1-crash": lambda p: crash_zdt1(**p),
    "dtlz2-crash": lambda p: crash_dtlz2(**p),
    "vehicle": _vehicle,
}


def make_problem(name: str, params: dict | None = None):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise UsageError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return factory(dict(params or {}))
