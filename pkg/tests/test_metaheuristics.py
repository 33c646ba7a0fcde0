import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mpctune.benchmarks import synthetic_zdt1, zdt1_front
from mpctune.benchmarks.problem import BenchmarkProblem
from mpctune.core import BoxBounds, Evaluation, dominates, pareto_filter
from mpctune.metaheuristics import (AdaptiveGrid, GaConfig, PsoConfig, Repository,
                                    _reseed_crashed, constrained_winner, crossover_interpolate,
                                    crowding_distance, mutate_gaussian, nondominated_sort,
                                    run_mopso, run_nsga2)
from mpctune.metrics import hypervolume

B3 = BoxBounds.uniform(0.0, 1.0, 3)


def peel_ranks(F):
    """Rank by repeatedly removing the brute-force non-dominated set."""
    F = np.asarray(F, float)
    ranks = np.full(len(F), -1)
    left = list(range(len(F)))
    r = 0
    while left:
        front = [i for i in left if not any(dominates(F[j], F[i]) for j in left if j != i)]
        ranks[front] = r
        left = [i for i in left if i not in front]
        r += 1
    return ranks


def always_crash(dim=3):
    b = BoxBounds.uniform(0.0, 1.0, dim)
    return BenchmarkProblem("crash", b, 2, np.array([1.0, 1.0]),
                            lambda t: Evaluation(t, False, None, 10, 0.01),
                            mean_steps_per_eval=10, nominal_eval_seconds=0.01)


# -- variation ---------------------------------------------------------------

def test_crossover_examples():
    rng = np.random.default_rng(0)
    a, b = np.zeros(4), np.ones(4)
    assert np.array_equal(crossover_interpolate(a, b, rng, lam=0.0), a)
    assert np.array_equal(crossover_interpolate(a, b, rng, lam=0.5), np.full(4, 0.5))
    pa, pb = np.array([0.2, -1.0, 3.0]), np.array([0.7, 2.0, 3.0])
    lo, hi = np.minimum(pa, pb), np.maximum(pa, pb)
    for _ in range(1000):
        c = crossover_interpolate(pa, pb, rng)
        assert np.all(c >= lo) and np.all(c <= hi)


def test_mutation_examples():
    rng = np.random.default_rng(1)
    b = BoxBounds.uniform(-3.0, 4.0, 5)
    theta = np.array([0.0, 1.0, -2.0, 3.9, -2.9])
    assert np.array_equal(mutate_gaussian(theta, 0.1, 0.0, rng, b), theta)
    for _ in range(10_000):
        out = mutate_gaussian(theta, 0.5, 1.0, rng, b)
        assert np.all(out >= -3) and np.all(out <= 4)
    with pytest.raises(ValueError):
        mutate_gaussian(theta, 0.0, 1.0, rng, b)


def test_mutation_std_matches_scale():
    rng = np.random.default_rng(2)
    b = BoxBounds.uniform(-100.0, 100.0, 1)
    draws = np.array([mutate_gaussian([0.0], 0.01, 1.0, rng, b)[0] for _ in range(100_000)])
    assert draws.std() == pytest.approx(0.01 * 200.0, rel=0.05)


# -- sorting -----------------------------------------------------------------

def test_sort_examples():
    assert list(nondominated_sort([[1, 1], [2, 2], [3, 3]])) == [0, 1, 2]
    F = np.array([[1, 2], [2, 1], [np.inf, np.inf], [3, 3]])
    r = nondominated_sort(F)
    assert r[2] > max(r[0], r[1], r[3])


def test_sort_matches_peeling_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        F = rng.integers(0, 6, size=(30, 2)).astype(float)
        assert np.array_equal(nondominated_sort(F), peel_ranks(F))
        G = rng.random((30, 3))
        assert np.array_equal(nondominated_sort(G), peel_ranks(G))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 3)),
              elements=st.integers(0, 5).map(float)))
def test_rank0_equals_pareto_filter(F):
    r = nondominated_sort(F)
    assert sorted(np.flatnonzero(r == 0)) == sorted(int(i) for i in pareto_filter(F))
    for i, j in zip(*np.nonzero(r[:, None] == r[None, :])):
        assert not dominates(F[i], F[j])


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([[0, 1], [1, 0]])))
    d = crowding_distance([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)
    # Constant objective contributes nothing.
    d = crowding_distance([[0.0, 5.0], [0.5, 5.0], [1.0, 5.0]])
    assert d[1] == pytest.approx(1.0)


def test_crowding_permutation_invariant():
    rng = np.random.default_rng(4)
    F = rng.random((12, 3))
    d = crowding_distance(F)
    perm = rng.permutation(12)
    assert np.allclose(crowding_distance(F[perm]), d[perm])


# -- NSGA-II -----------------------------------------------------------------

def test_reseed_replaces_all_crashed():
    rng = np.random.default_rng(5)
    X = np.full((6, 3), 0.5)
    F = np.full((6, 2), np.inf)
    out = _reseed_crashed(X, F, B3, rng)
    assert np.all(out != 0.5)
    assert all(B3.contains(x) for x in out)
    F[:3] = 1.0
    out = _reseed_crashed(X, F, B3, rng)
    assert np.all(out[:3] == 0.5) and np.all(out[3:] != 0.5)


def test_nsga2_all_crash_keeps_sampling_fresh_points():
    cfg = GaConfig(n_pop=10, n_gen=3)
    rec = run_nsga2(always_crash(), cfg, 0, max_evals=40)
    X = rec.thetas()
    assert len(X) == 40 and np.all((X >= 0) & (X <= 1))
    assert len(np.unique(X, axis=0)) == 40


def test_nsga2_deterministic_and_bounded():
    p = synthetic_zdt1()
    cfg = GaConfig(n_pop=20, n_gen=5)
    a = run_nsga2(p, cfg, 7, max_evals=120)
    b = run_nsga2(p, cfg, 7, max_evals=120)
    assert np.array_equal(a.thetas(), b.thetas())
    assert a.batch_sizes == b.batch_sizes == [20] * 6
    X = a.thetas()
    assert np.all((X >= 0) & (X <= 1))


def test_nsga2_zero_budget():
    rec = run_nsga2(synthetic_zdt1(), GaConfig(), 0, budget_steps=0)
    assert len(rec.evaluations) == 0 and rec.notes


def test_nsga2_zdt1_reaches_analytic_front():
    p = synthetic_zdt1()
    ref = np.array([1.1, 1.1])
    target = hypervolume(zdt1_front(1000), ref)
    good = 0
    for seed in range(10):
        rec = run_nsga2(p, GaConfig(), seed)
        good += hypervolume(rec.dataset.success_objectives(), ref) >= 0.95 * target
    assert good >= 8


# -- MOPSO -------------------------------------------------------------------

def test_constrained_winner_rule():
    assert constrained_winner([1, 1], True, [2, 2], True, 0.9) == 0
    assert constrained_winner([2, 2], True, [1, 1], True, 0.9) == 1
    assert constrained_winner([1, 2], True, None, False, 0.1) == 0
    assert constrained_winner(None, False, [5, 5], True, 0.9) == 1
    assert {constrained_winner(None, False, None, False, c) for c in (0.1, 0.9)} == {0, 1}


def test_repository_nondominated_and_capped():
    rng = np.random.default_rng(6)
    repo = Repository(15, AdaptiveGrid(7, 0.1))
    for _ in range(20):
        X = rng.random((30, 2))
        f1 = rng.random(30)
        F = np.column_stack([f1, 1 - f1 + 0.05 * rng.random(30)])
        repo.add(X, F, rng)
        assert len(repo) <= 15
        assert len(pareto_filter(repo.F)) == len(repo)


def test_mopso_repository_within_cap_and_deterministic():
    p = synthetic_zdt1()
    cfg = PsoConfig(n_pop=30, n_rep=25, n_gen=10)
    a = run_mopso(p, cfg, 3)
    b = run_mopso(p, cfg, 3)
    assert np.array_equal(a.thetas(), b.thetas())
    assert max(a.config["repository_sizes"]) <= 25
    X = a.thetas()
    assert np.all((X >= 0) & (X <= 1))


def test_mopso_default_cap():
    rec = run_mopso(synthetic_zdt1(), PsoConfig(n_gen=5), 1)
    assert max(rec.config["repository_sizes"]) <= 250


def test_mopso_empty_repository_logged():
    rec = run_mopso(always_crash(), PsoConfig(n_pop=8, n_gen=2), 0)
    assert any("repository empty" in n for n in rec.notes)
