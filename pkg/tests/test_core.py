import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mpctune.core import (BoxBounds, Dataset, Evaluation, UsageError, augment, current_front,
                          dominates, pareto_filter)


def brute_front(points):
    """All-pairs oracle: indices not dominated by any other point."""
    P = np.asarray(points, float)
    keep = []
    for i in range(len(P)):
        if not any(dominates(P[j], P[i]) for j in range(len(P)) if j != i):
            keep.append(i)
    return keep


def ok(theta, objs):
    return Evaluation(np.asarray(theta, float), True, np.asarray(objs, float), 10, 0.1)


def crash(theta):
    return Evaluation(np.asarray(theta, float), False, None, 10, 0.1)


# -- dominance ---------------------------------------------------------------

def test_dominates_examples():
    assert dominates([1, 2, 3], [2, 3, 4])
    assert not dominates([1, 2], [1, 2])
    assert not dominates([1, 3], [2, 2])
    assert not dominates([2, 2], [1, 3])


def test_dominates_length_mismatch():
    with pytest.raises(UsageError):
        dominates([1, 2], [1, 2, 3])


vec3 = arrays(np.float64, 3, elements=st.integers(-3, 3).map(float))


@given(vec3)
def test_dominance_irreflexive(a):
    assert not dominates(a, a)


@given(vec3, vec3, vec3)
def test_dominance_transitive(a, b, c):
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


# -- pareto filter -----------------------------------------------------------

def test_pareto_filter_examples():
    assert sorted(pareto_filter([[1, 2], [2, 1], [2, 2]])) == [0, 1]
    assert list(pareto_filter([[5, 5]])) == [0]
    assert len(pareto_filter(np.empty((0, 2)))) == 0


def test_pareto_filter_keeps_duplicates():
    assert sorted(pareto_filter([[1, 2], [1, 2], [3, 3]])) == [0, 1]


def test_pareto_filter_matches_bruteforce_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = rng.random((20, 3))
        assert sorted(pareto_filter(P)) == brute_front(P)


@settings(max_examples=60)
@given(arrays(np.float64, st.tuples(st.integers(1, 25), st.integers(2, 4)),
              elements=st.integers(0, 4).map(float)))
def test_pareto_filter_properties(P):
    idx = set(int(i) for i in pareto_filter(P))
    assert sorted(idx) == brute_front(P)
    for i in range(len(P)):
        if i not in idx:
            assert any(dominates(P[j], P[i]) for j in idx)


def test_pareto_filter_rejects_nonfinite():
    with pytest.raises(UsageError):
        pareto_filter([[np.nan, 1.0], [0.0, 0.0]])


# -- dataset and front -------------------------------------------------------

def test_evaluation_invariants():
    with pytest.raises(UsageError):
        Evaluation(np.zeros(2), False, np.ones(2), 1, 0.0)
    with pytest.raises(UsageError):
        Evaluation(np.zeros(2), True, None, 1, 0.0)
    with pytest.raises(UsageError):
        Evaluation(np.zeros(2), True, np.array([1.0, np.inf]), 1, 0.0)
    with pytest.raises(UsageError):
        Evaluation(np.zeros(2), True, np.ones(2), -1, 0.0)


def test_bounds_validation_and_mapping():
    with pytest.raises(UsageError):
        BoxBounds(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    b = BoxBounds.uniform(-3, 4, 5)
    assert b.dim == 5
    x = np.full(5, 0.5)
    assert np.allclose(b.to_unit(b.from_unit(x)), x)
    s = b.sample(np.random.default_rng(1), 100)
    assert np.all(s >= -3) and np.all(s <= 4)


def test_current_front_examples():
    ds = Dataset((ok([0, 0], [1, 2]), ok([0, 1], [2, 1]), ok([1, 1], [3, 3])))
    assert len(current_front(ds)) == 2
    ds = Dataset(tuple(crash([i, 0]) for i in range(5)) + (ok([9, 9], [4, 4]),))
    f = current_front(ds)
    assert list(f.member_indices) == [5]
    empty = current_front(Dataset((crash([0, 0]),)))
    assert empty.is_empty


def test_current_front_composition_oracle():
    rng = np.random.default_rng(3)
    evals = []
    for i in range(40):
        if rng.random() < 0.3:
            evals.append(crash(rng.random(2)))
        else:
            evals.append(ok(rng.random(2), rng.random(3)))
    ds = Dataset(tuple(evals))
    succ = ds.success_indices()
    expected = sorted(int(succ[i]) for i in pareto_filter(ds.success_objectives()))
    f = current_front(ds)
    assert sorted(int(i) for i in f.member_indices) == expected
    assert all(ds[i].crash_ok for i in f.member_indices)


def test_augment_order():
    a, b, c, d, e = (ok([i, 0], [i, -i]) for i in range(5))
    ds = augment(Dataset((a, b, c)), (d, e))
    assert ds.evaluations == (a, b, c, d, e)
    base = Dataset((a,))
    assert augment(base, ()).evaluations == (a,)
    assert augment(Dataset(), (a,)).evaluations == (a,)
    assert base.evaluations == (a,)


def test_augment_dimension_mismatch():
    with pytest.raises(UsageError):
        augment(Dataset((ok([0, 0], [1, 1]),)), (ok([0, 0, 0], [1, 1]),))
    with pytest.raises(UsageError):
        augment(Dataset((ok([0, 0], [1, 1]),)), (ok([0, 0], [1, 1, 1]),))
