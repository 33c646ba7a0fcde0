"""Experiment runner, persistence, comparison and data export."""

from .experiment import ExperimentConfig, SeedOutcome, load_records, run_experiment, run_seed
from .persistence import load_record, save_record, seed_dir
from .registry import PROBLEMS, VARIANTS, get_variant, make_problem
from .report import Comparison, compare, emit_plot_data, write_comparison

__all__ = [
    "ExperimentConfig",
    "SeedOutcome",
    "load_records",
    "run_experiment",
    "run_seed",
    "load_record",
    "save_record",
    "seed_dir",
    "PROBLEMS",
    "VARIANTS",
    "get_variant",
    "make_problem",
    "Comparison",
    "compare",
    "emit_plot_data",
    "write_comparison",
]
