import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from mpctune.benchmarks import crash_zdt1, synthetic_zdt1, vehicle_problem
from mpctune.core import Evaluation, UsageError, pareto_filter
from mpctune.harness import (ExperimentConfig, compare, emit_plot_data, load_record,
                             load_records, run_experiment, save_record,
                             write_comparison)
from mpctune.harness import experiment as experiment_mod
from mpctune.harness.cli import main, parse_seeds
from mpctune.harness.registry import VARIANTS, get_variant, make_problem
from mpctune.tracking import RunRecord, SteppingClock


def fixed_record(objs_per_batch):
    """Record with one evaluation (1 step) per batch and given objectives."""
    evals = [Evaluation(np.zeros(2), True, np.asarray(o, float), 1, 0.0) for o in objs_per_batch]
    return RunRecord(config={}, evaluations=evals, batch_of=list(range(len(evals))))


def assert_records_equal(a: RunRecord, b: RunRecord):
    assert a.config == b.config and a.status == b.status and a.notes == b.notes
    assert a.batch_of == b.batch_of
    assert len(a.evaluations) == len(b.evaluations)
    for x, y in zip(a.evaluations, b.evaluations):
        assert np.array_equal(x.theta, y.theta) and x.crash_ok == y.crash_ok
        assert (x.objectives is None and y.objectives is None) or np.array_equal(x.objectives,
                                                                               y.objectives)
        assert (x.sim_steps, x.wall_time, x.info) == (y.sim_steps, y.wall_time, y.info)
    assert a.traces == b.traces


# -- registry ----------------------------------------------------------------

def test_variant_names_resolve():
    assert set(VARIANTS) == {"TSEMO-1-C", "TSEMO-A-C", "TSEMO-1-VDP", "TSEMO-A-VDP",
                             "EIM-1-VDP", "NSGA-II", "MOPSO", "Rand", "Grid"}
    with pytest.raises(UsageError):
        get_variant("CMA-ES")
    with pytest.raises(UsageError):
        make_problem("rosenbrock")
    with pytest.raises(UsageError):
        get_variant("NSGA-II").configure({"n_popp": 4})
    assert get_variant("NSGA-II").configure({"n_pop": 10}).n_pop == 10


# -- persistence -------------------------------------------------------------

def test_record_round_trip(tmp_path):
    p = crash_zdt1()
    rec = get_variant("TSEMO-A-VDP").run(p, 0, max_evals=12, clock=SteppingClock(),
                                         options={"ga_pop": 20, "ga_gen": 5, "gp_restarts": 1})
    assert any(not e.crash_ok for e in rec.evaluations) or len(rec.evaluations) == 12
    save_record(rec, tmp_path, {"k": 1}, p.reference_point)
    back = load_record(tmp_path)
    assert_records_equal(rec, back)
    assert np.array_equal(rec.hv_curve(p.reference_point).hv, back.hv_curve(p.reference_point).hv)
    assert (tmp_path / "hv_curve.csv").exists()


def test_round_trip_with_crashes(tmp_path):
    rec = get_variant("Rand").run(crash_zdt1(n_dim=2), 1, max_evals=200)
    assert any(not e.crash_ok for e in rec.evaluations)
    save_record(rec, tmp_path)
    assert_records_equal(rec, load_record(tmp_path))


# -- experiment --------------------------------------------------------------

def test_run_experiment_resume_and_distinct_seeds(tmp_path):
    cfg = ExperimentConfig(problem="zdt1", variants=("Rand",), max_evals=20, out=str(tmp_path),
                           seeds=(0, 1, 2))
    first = run_experiment(cfg)
    assert all(o.ok and not o.resumed for o in first)
    again = run_experiment(cfg)
    assert all(o.resumed for o in again)
    recs = load_records(tmp_path, "zdt1", "Rand", (0, 1, 2))
    seqs = [r.thetas() for r in recs]
    assert not np.array_equal(seqs[0], seqs[1]) and not np.array_equal(seqs[1], seqs[2])
    fresh = get_variant("Rand").run(make_problem("zdt1"), 1, max_evals=20)
    assert np.array_equal(fresh.thetas(), seqs[1])
    # A changed setting invalidates the stored result.
    changed = run_experiment(replace(cfg, max_evals=21))
    assert all(not o.resumed for o in changed)


def test_zero_budget_gives_empty_record_with_notice(tmp_path):
    cfg = ExperimentConfig(problem="zdt1", variants=("NSGA-II",), budget_steps=0,
                           out=str(tmp_path), seeds=(0,))
    [o] = run_experiment(cfg)
    assert o.ok and "zero" in o.message
    rec = load_records(tmp_path, "zdt1", "NSGA-II", (0,))[0]
    assert rec.evaluations == [] and rec.notes


def test_failed_seed_is_isolated(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = make_problem

    def flaky(name, params=None):
        calls["n"] += 1
        p = real(name, params)
        if calls["n"] != 1:
            return p
        inner = p.func
        count = {"n": 0}

        def func(theta):
            count["n"] += 1
            if count["n"] > 7:
                raise RuntimeError("simulator died")
            return inner(theta)

        return replace(p, func=func)

    monkeypatch.setattr(experiment_mod, "make_problem", flaky)
    cfg = ExperimentConfig(problem="zdt1", variants=("Rand",), max_evals=15, out=str(tmp_path),
                           seeds=(0, 1))
    out = run_experiment(cfg)
    assert [o.status for o in out] == ["failed", "complete"]
    assert "simulator died" in out[0].message
    partial = load_record(out[0].directory)
    assert partial.status == "failed" and len(partial.evaluations) == 7
    assert len(load_record(out[1].directory).evaluations) == 15


def test_budget_accounting_within_one_batch(tmp_path):
    p = synthetic_zdt1()
    budget = 10 * p.mean_steps_per_eval + 123
    for name in ("Rand", "NSGA-II"):
        rec = get_variant(name).run(p, 0, budget, options={"n_pop": 4} if name == "NSGA-II"
                                    else None)
        last = rec.traces[-1]
        last_steps = sum(e.sim_steps for e, b in zip(rec.evaluations, rec.batch_of)
                         if b == last.index) + last.overhead_steps
        assert rec.total_steps - last_steps < budget <= rec.total_steps


def test_experiment_config_validation(tmp_path):
    with pytest.raises(UsageError):
        ExperimentConfig(problem="zdt1", variants=())
    with pytest.raises(UsageError):
        ExperimentConfig(problem="zdt1", variants=("Rand", "Rand"))
    with pytest.raises(UsageError):
        run_experiment(ExperimentConfig(problem="zdt1", variants=("Rand",)))
    f = tmp_path / "exp.json"
    f.write_text(json.dumps({"problem": "zdt1", "variants": ["Rand"], "max_evals": 3}))
    cfg = ExperimentConfig.from_file(f, out=str(tmp_path))
    assert cfg.max_evals == 3 and cfg.out == str(tmp_path)


# -- comparison --------------------------------------------------------------

def test_compare_identical_sets_no_flags():
    recs = [fixed_record([[0.5 + 0.01 * s, 0.5]]) for s in range(10)]
    comp = compare({"A": recs, "B": list(recs)}, [1.0, 1.0], 100)
    assert not any(comp.worse[v].any() for v in ("A", "B"))
    assert set(comp.best) == {"A"}


def test_compare_separated_flags_everywhere():
    good = [fixed_record([[0.1 + 0.01 * s, 0.1]]) for s in range(10)]
    bad = [fixed_record([[0.6 + 0.01 * s, 0.6]]) for s in range(10)]
    comp = compare({"bad": bad, "good": good}, [1.0, 1.0], 1000)
    assert set(comp.best) == {"good"}
    assert comp.worse["bad"].all() and not comp.worse["good"].any()
    assert comp.final_summary()["significantly_worse"]["bad"]


def test_compare_requires_matching_seed_counts():
    a = [fixed_record([[0.5, 0.5]])] * 3
    with pytest.raises(UsageError):
        compare({"A": a, "B": a[:2]}, [1, 1], 10)
    with pytest.raises(UsageError):
        compare({"A": a}, [1, 1], 10)


def test_report_regeneration_byte_identical(tmp_path):
    cfg = ExperimentConfig(problem="zdt1-crash", variants=("Rand", "NSGA-II"), max_evals=30,
                           out=str(tmp_path / "runs"), seeds=(0, 1, 2))
    run_experiment(cfg)
    ref = make_problem("zdt1-crash").reference_point
    outputs = []
    for k in range(2):
        recs = {v: load_records(cfg.out, cfg.problem, v, cfg.seeds) for v in cfg.variants}
        budget = max(r.total_steps for rs in recs.values() for r in rs)
        d = tmp_path / f"report{k}"
        files = write_comparison(compare(recs, ref, budget), d)
        files += emit_plot_data(recs, ref, budget, d, seeds=cfg.seeds)
        outputs.append({f.name: f.read_bytes() for f in files})
    assert outputs[0] == outputs[1]


def test_front_export_only_feasible_nondominated(tmp_path):
    p = crash_zdt1(n_dim=2)
    recs = {v: [get_variant(v).run(p, s, max_evals=150) for s in (0, 1)] for v in ("Rand",)}
    emit_plot_data(recs, p.reference_point, 150 * p.mean_steps_per_eval, tmp_path, seeds=(0, 1))
    with open(tmp_path / "front_Rand.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    for s in ("0", "1"):
        pts = np.array([[float(r["J1"]), float(r["J2"])] for r in rows if r["seed"] == s])
        assert len(pareto_filter(pts)) == len(pts)
        rec = recs["Rand"][int(s)]
        idx = [int(r["eval_index"]) for r in rows if r["seed"] == s]
        assert all(rec.evaluations[i].crash_ok for i in idx)
    hv = np.genfromtxt(tmp_path / "hv_Rand.csv", delimiter=",", names=True)
    assert len(hv) >= 90


def test_trajectory_export_row_count(tmp_path):
    p = vehicle_problem()
    rec = get_variant("Rand").run(p, 0, max_evals=2)
    picks = [("Rand", 0, i) for i in range(2)]
    files = emit_plot_data({"Rand": [rec]}, p.reference_point, rec.total_steps, tmp_path,
                           seeds=(0,), vehicle_config=p.params["vehicle"], trajectories=picks)
    for i in range(2):
        f = tmp_path / f"trajectory_Rand_seed0_eval{i}.csv"
        assert f in files
        n_rows = len(f.read_text().splitlines()) - 1
        assert n_rows == rec.evaluations[i].sim_steps


def test_overhead_series_small_for_metaheuristics():
    p = vehicle_problem()
    rec = get_variant("NSGA-II").run(p, 0, max_evals=20, options={"n_pop": 10})
    steps, ratio = rec.relative_overhead_curve()
    assert np.all(ratio < 0.01)


# -- CLI ---------------------------------------------------------------------

def test_parse_seeds():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,4,7") == [1, 4, 7]
    assert parse_seeds("0-1,5") == [0, 1, 5]


def test_cli_end_to_end(tmp_path, capsys):
    out = str(tmp_path / "runs")
    common = ["--problem", "zdt1-crash", "--variant", "Rand", "--variant", "MOPSO",
              "--seeds", "0-1", "--out", out]
    assert main(["list-variants"]) == 0
    assert "TSEMO-A-VDP" in capsys.readouterr().out
    assert main(["run", *common, "--max-evals", "40"]) == 0
    assert main(["compare", *common]) == 0
    assert (tmp_path / "runs" / "zdt1-crash" / "report" / "comparison.csv").exists()
    assert main(["export", *common]) == 0
    assert (tmp_path / "runs" / "zdt1-crash" / "plot_data" / "front_MOPSO.csv").exists()


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["run", "--variant", "Rand", "--max-evals", "3", "--out", str(tmp_path)]) == 2
    assert main(["run", "--problem", "zdt1", "--variant", "Nope", "--max-evals", "3"]) == 2
    assert main(["compare", "--problem", "zdt1", "--variant", "Rand", "--variant", "Grid",
                 "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_failed_seed_exit_code(tmp_path, monkeypatch):
    real = make_problem

    def broken(name, params=None):
        p = real(name, params)

        def func(theta):
            raise RuntimeError("boom")

        return replace(p, func=func)

    monkeypatch.setattr(experiment_mod, "make_problem", broken)
    assert main(["run", "--problem", "zdt1", "--variant", "Rand", "--seeds", "0",
                 "--max-evals", "3", "--out", str(tmp_path)]) == 1
