"""Command line entry point: ``mpctune {run,compare,export,list-variants}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..core import UsageError
from .experiment import DEFAULT_SEEDS, ExperimentConfig, load_records, run_experiment
from .registry import PROBLEMS, VARIANTS, make_problem
from .report import compare, emit_plot_data, write_comparison

log = logging.getLogger("mpctune")


def parse_seeds(text: str) -> List[int]:
    """``"0-9"``, ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def parse_trajectory(text: str):
    try:
        variant, seed, index = text.rsplit(":", 2)
        return variant, int(seed), int(index)
    except ValueError:
        raise argparse.ArgumentTypeError("expected VARIANT:SEED:EVAL_INDEX") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON experiment file; flags override it")
    p.add_argument("--problem", help="benchmark problem name")
    p.add_argument("--variant", action="append", dest="variants",
                   help="optimizer variant (repeatable)")
    p.add_argument("--budget-steps", type=int, help="simulation-step budget incl. overhead")
    p.add_argument("--seeds", type=parse_seeds, help="e.g. 0-9 or 1,4,7 (default 0-9)")
    p.add_argument("--out", help="output directory (default: runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpctune", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run optimizer variants over seeds")
    _common(run)
    run.add_argument("--max-evals", type=int, help="cap on evaluations per run")
    run.add_argument("--workers", type=int, help="concurrent evaluations per batch")
    run.add_argument("--jobs", type=int, help="seeds run in parallel processes")
    run.add_argument("--clock", choices=("wall", "stepping"),
                     help="overhead clock; 'stepping' makes batch sizes timing-independent")

    cmp_ = sub.add_parser("compare", help="median HV table with significance flags")
    _common(cmp_)
    cmp_.add_argument("--alpha", type=float, default=0.05)
    cmp_.add_argument("--report-dir", type=Path, help="default: <out>/<problem>/report")

    exp = sub.add_parser("export", help="plot-ready columnar data")
    _common(exp)
    exp.add_argument("--trajectory", action="append", type=parse_trajectory, default=[],
                     help="VARIANT:SEED:EVAL_INDEX of a vehicle evaluation to re-simulate")
    exp.add_argument("--report-dir", type=Path, help="default: <out>/<problem>/plot_data")

    sub.add_parser("list-variants", help="show the available variants and problems")
    return parser


def _experiment(args) -> ExperimentConfig:
    base = {}
    if args.config is not None:
        with open(args.config) as fh:
            base = json.load(fh)
    flags = {
        "problem": args.problem,
        "variants": args.variants,
        "budget_steps": args.budget_steps,
        "seeds": args.seeds,
        "out": args.out,
    }
    for key in ("max_evals", "workers", "jobs", "clock"):
        if hasattr(args, key):
            flags[key] = getattr(args, key)
    base.update({k: v for k, v in flags.items() if v is not None})
    if "problem" not in base:
        raise UsageError("--problem is required")
    if "variants" not in base:
        raise UsageError("--variant is required")
    base.setdefault("seeds", list(DEFAULT_SEEDS))
    return ExperimentConfig(**base)


def _records(cfg: ExperimentConfig):
    recs = {v: load_records(cfg.out, cfg.problem, v, cfg.seeds) for v in cfg.variants}
    budget = cfg.budget_steps
    if budget is None:
        budget = max((r.total_steps for rs in recs.values() for r in rs), default=0)
    if budget <= 0:
        raise UsageError("records contain no steps; pass --budget-steps")
    return recs, budget


def cmd_run(args) -> int:
    cfg = _experiment(args)
    outcomes = run_experiment(cfg)
    failed = [o for o in outcomes if not o.ok]
    for o in outcomes:
        tag = "resumed" if o.resumed else o.status
        print(f"{o.variant}\tseed {o.seed}\t{tag}\t{o.directory}"
              + (f"\t{o.message}" if o.message else ""))
    if failed:
        print(f"{len(failed)} seed(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args) -> int:
    cfg = _experiment(args)
    problem = make_problem(cfg.problem, cfg.problem_params)
    recs, budget = _records(cfg)
    comp = compare(recs, problem.reference_point, budget, alpha=args.alpha)
    out = args.report_dir or Path(cfg.out) / cfg.problem / "report"
    for p in write_comparison(comp, out):
        print(p)
    summary = comp.final_summary()
    print(f"best at final step: {summary['best_variant']}")
    for v in comp.variants:
        flag = " (significantly worse)" if summary["significantly_worse"][v] else ""
        print(f"  {v}: median HV {summary['median_hv'][v]:.6g}{flag}")
    return 0


def cmd_export(args) -> int:
    cfg = _experiment(args)
    problem = make_problem(cfg.problem, cfg.problem_params)
    recs, budget = _records(cfg)
    out = args.report_dir or Path(cfg.out) / cfg.problem / "plot_data"
    vehicle_cfg = problem.params.get("vehicle")
    if args.trajectory and vehicle_cfg is None:
        raise UsageError("trajectory export needs the vehicle problem")
    files = emit_plot_data(recs, problem.reference_point, budget, out, seeds=cfg.seeds,
                           vehicle_config=vehicle_cfg, trajectories=args.trajectory)
    for p in files:
        print(p)
    return 0


def cmd_list(_args) -> int:
    print("variants:")
    for v in VARIANTS.values():
        print(f"  {v.name:<12} {v.description}")
    print("problems:")
    for name in PROBLEMS:
        print(f"  {name}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "compare": cmd_compare, "export": cmd_export,
                "list-variants": cmd_list}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"mpctune: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
