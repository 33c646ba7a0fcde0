"""On-disk layout of run records.

One directory per (problem, variant, seed) holding

* ``evaluations.jsonl``: one evaluation per line in commit order,
* ``meta.json``: configuration, iteration traces, status and notes,
* ``hv_curve.csv``: HV of the feasible front after each batch.

Floats are written with ``repr`` precision so a reload is lossless.
"""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import Evaluation
from ..tracking import IterationTrace, RunRecord

EVALS_FILE = "evaluations.jsonl"
PARTIAL_FILE = "evaluations.partial.jsonl"
META_FILE = "meta.json"
HV_FILE = "hv_curve.csv"


def seed_dir(out: os.PathLike, problem: str, variant: str, seed: int) -> Path:
    return Path(out) / problem / variant / f"seed_{seed}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def evaluation_to_dict(e: Evaluation, index: int, batch: Optional[int] = None) -> dict:
    return {
        "index": index,
        "batch": batch,
        "theta": [float(v) for v in e.theta],
        "crash_ok": bool(e.crash_ok),
        "objectives": None if e.objectives is None else [float(v) for v in e.objectives],
        "sim_steps": int(e.sim_steps),
        "wall_time": float(e.wall_time),
        "info": _jsonable(e.info),
    }


def evaluation_from_dict(d: dict) -> Evaluation:
    objs = None if d["objectives"] is None else np.array(d["objectives"], dtype=float)
    return Evaluation(np.array(d["theta"], dtype=float), bool(d["crash_ok"]), objs,
                      int(d["sim_steps"]), float(d["wall_time"]), dict(d.get("info") or {}))


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def save_record(record: RunRecord, directory: os.PathLike, extra: Optional[dict] = None,
                reference_point=None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / EVALS_FILE, "w") as fh:
        for i, (e, b) in enumerate(zip(record.evaluations, record.batch_of)):
            fh.write(_dump(evaluation_to_dict(e, i, b)) + "\n")
    meta = {
        "config": record.config,
        "status": record.status,
        "notes": list(record.notes),
        "traces": [asdict(t) for t in record.traces],
        "totals": {
            "evaluations": len(record.evaluations),
            "steps": record.total_steps,
            "overhead_seconds": record.total_overhead_seconds,
            "eval_seconds": record.total_eval_seconds,
        },
        "experiment": extra or {},
    }
    with open(d / META_FILE, "w") as fh:
        fh.write(json.dumps(_jsonable(meta), sort_keys=True, indent=1) + "\n")
    if reference_point is not None:
        curve = record.hv_curve(reference_point)
        write_columns(d / HV_FILE, ("steps", "hv"), curve.steps, curve.hv)
    partial = d / PARTIAL_FILE
    if partial.exists():
        partial.unlink()
    return d


def load_record(directory: os.PathLike) -> RunRecord:
    d = Path(directory)
    with open(d / META_FILE) as fh:
        meta = json.load(fh)
    evals, batches = [], []
    evals_path = d / EVALS_FILE
    if evals_path.exists():
        with open(evals_path) as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    evals.append(evaluation_from_dict(row))
                    batches.append(row.get("batch"))
    traces = [IterationTrace(**t) for t in meta.get("traces", [])]
    return RunRecord(config=meta["config"], evaluations=evals, batch_of=batches,
                     traces=traces, status=meta["status"], notes=list(meta.get("notes", [])))


def load_meta(directory: os.PathLike) -> Optional[dict]:
    p = Path(directory) / META_FILE
    if not p.exists():
        return None
    with open(p) as fh:
        return json.load(fh)


def write_columns(path: os.PathLike, header, *columns):
    """Columnar text: one header row, then one row per index."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class PartialLog:
    """Append-only log of evaluations as they complete, for crash recovery."""

    def __init__(self, directory: os.PathLike):
        self.path = Path(directory) / PARTIAL_FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")
        self._lock = threading.Lock()
        self._count = 0

    def append(self, e: Evaluation):
        with self._lock:
            line = _dump(evaluation_to_dict(e, self._count))
            self._count += 1
            with open(self.path, "a") as fh:
                fh.write(line + "\n")

    def read(self):
        with open(self.path) as fh:
            return [evaluation_from_dict(json.loads(l)) for l in fh if l.strip()]
