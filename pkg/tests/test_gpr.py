import numpy as np
import pytest

from mpctune import gpr
from mpctune.core import BoxBounds, UsageError
from mpctune.gpr import GPHyperparameters, GPModel, log_marginal_likelihood

BOUNDS5 = BoxBounds.uniform(0.0, 1.0, 5)


def dense_posterior(model: GPModel, Xs):
    """Closed-form posterior by explicit inverse, in original units."""
    h = model.hyper
    X = model.train_inputs
    Xs = (np.atleast_2d(Xs) - model.x_lower) / model.x_span

    def k(A, B):
        d = (A[:, None, :] - B[None, :, :]) / h.lengthscales
        return h.signal_variance * np.exp(-0.5 * np.sum(d * d, axis=2))

    K = k(X, X) + (h.noise_variance + model.jitter) * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    ks = k(Xs, X)
    mu = h.constant_mean + ks @ Kinv @ (model.train_targets - h.constant_mean)
    var = h.signal_variance - np.einsum("ij,jk,ik->i", ks, Kinv, ks)
    return model.y_mean + model.y_std * mu, model.y_std * np.sqrt(np.maximum(var, 0))


def random_hyper(rng, dim):
    return GPHyperparameters(rng.normal(0, 0.3), rng.uniform(0.5, 2.0),
                             rng.uniform(0.2, 1.5, dim), 10 ** rng.uniform(-4, -2))


def test_lml_matches_closed_form_hand_dataset():
    X = np.array([[0.1], [0.5], [0.9]])
    y = np.array([0.3, -0.2, 0.7])
    h = GPHyperparameters(0.1, 1.3, np.array([0.4]), 0.01)
    d = X - X.T
    K = 1.3 * np.exp(-0.5 * d ** 2 / 0.16) + 0.01 * np.eye(3)
    r = y - 0.1
    expected = (-0.5 * r @ np.linalg.solve(K, r) - 0.5 * np.linalg.slogdet(K)[1]
                - 1.5 * np.log(2 * np.pi))
    assert log_marginal_likelihood(h.to_vector(), X, y) == pytest.approx(expected, rel=1e-12)


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(10):
        X = rng.random((8, 3))
        y = rng.standard_normal(8)
        v = random_hyper(rng, 3).to_vector()
        _, g = log_marginal_likelihood(v, X, y, grad=True)
        fd = np.empty_like(v)
        for i in range(len(v)):
            e = np.zeros_like(v)
            e[i] = 1e-5
            fd[i] = (log_marginal_likelihood(v + e, X, y)
                     - log_marginal_likelihood(v - e, X, y)) / 2e-5
        assert np.allclose(g, fd, rtol=1e-4, atol=1e-6)


def test_predict_matches_dense_oracle():
    rng = np.random.default_rng(5)
    X = rng.random((5, 5))
    y = rng.standard_normal(5) * 3 + 1
    model = GPModel.condition(X, y, BOUNDS5, random_hyper(rng, 5))
    Xs = rng.random((7, 5))
    mu, sd = model.predict(Xs)
    mu_o, sd_o = dense_posterior(model, Xs)
    assert np.allclose(mu, mu_o, rtol=1e-8, atol=1e-12)
    assert np.allclose(sd, sd_o, rtol=1e-8, atol=1e-12)


def test_single_point_interpolates():
    X = np.array([[0.3, 0.6, 0.2, 0.9, 0.5]])
    model = gpr.fit(X, np.array([2.5]), BOUNDS5, restarts=3, rng=np.random.default_rng(0))
    mu, sd = model.predict(X[0])
    assert mu == pytest.approx(2.5, abs=1e-6)
    assert sd <= 1e-3


def test_prediction_at_training_inputs():
    rng = np.random.default_rng(2)
    X = rng.random((12, 5))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
    h = GPHyperparameters(0.0, 1.0, np.full(5, 0.5), gpr.JITTER_FLOOR)
    model = GPModel.condition(X, y, BOUNDS5, h)
    mu, sd = model.predict(X)
    assert np.allclose(mu, y, atol=1e-5 * max(1, np.std(y)) + 1e-6)
    assert np.all(sd <= 1e-3)


def test_prior_reversion_far_away():
    rng = np.random.default_rng(3)
    X = rng.random((6, 2)) * 0.1
    y = rng.standard_normal(6)
    b = BoxBounds.uniform(0.0, 1.0, 2)
    h = GPHyperparameters(0.2, 1.7, np.array([0.01, 0.01]), 1e-4)
    model = GPModel.condition(X, y, b, h)
    mu, sd = model.predict(np.array([0.95, 0.95]))
    assert mu == pytest.approx(model.prior_mean, rel=1e-2)
    assert sd == pytest.approx(model.prior_std, rel=1e-2)


def test_fit_deterministic_and_reorder_invariant():
    rng = np.random.default_rng(4)
    X = rng.random((15, 5))
    y = np.cos(X @ np.arange(1, 6))
    a = gpr.fit(X, y, BOUNDS5, restarts=4, rng=np.random.default_rng(9))
    b = gpr.fit(X, y, BOUNDS5, restarts=4, rng=np.random.default_rng(9))
    assert np.array_equal(a.hyper.to_vector(), b.hyper.to_vector())
    perm = rng.permutation(15)
    c = GPModel.condition(X[perm], y[perm], BOUNDS5, a.hyper)
    Xs = rng.random((10, 5))
    assert np.allclose(a.predict(Xs)[0], c.predict(Xs)[0], atol=1e-8)
    assert np.allclose(a.predict(Xs)[1], c.predict(Xs)[1], atol=1e-8)


def test_posterior_variance_bounded_by_prior():
    rng = np.random.default_rng(6)
    X = rng.random((10, 5))
    model = gpr.fit(X, rng.standard_normal(10), BOUNDS5, restarts=2, rng=rng)
    _, sd = model.predict(rng.random((200, 5)))
    assert np.all(sd >= 0)
    assert np.all(sd ** 2 <= model.prior_std ** 2 + 1e-9)


def test_fit_rejects_nonfinite_targets():
    with pytest.raises(UsageError):
        gpr.fit(np.zeros((2, 5)), np.array([1.0, np.nan]), BOUNDS5)


def test_jitter_escalation_on_duplicate_inputs():
    X = np.tile(np.array([[0.5] * 5]), (4, 1))
    h = GPHyperparameters(0.0, 1.0, np.full(5, 0.3), 0.0 + 1e-300)
    model = GPModel.condition(X, np.array([1.0, 1.0, 1.0, 1.0]), BOUNDS5, h)
    assert model.jitter >= gpr.JITTER_FLOOR
    assert np.isfinite(model.predict(X[0])[0])


def test_sample_posterior_consistency():
    rng = np.random.default_rng(7)
    X = rng.random((10, 5))
    y = np.sin(4 * X[:, 0]) + 0.5 * X[:, 2]
    model = gpr.fit(X, y, BOUNDS5, restarts=3, rng=rng)
    xt = np.array([0.4, 0.1, 0.8, 0.3, 0.6])
    draws = np.array([gpr.sample_posterior(model, 500, np.random.default_rng(100 + s))(xt)
                      for s in range(200)])
    mu, sd = model.predict(xt)
    se = draws.std(ddof=1) / np.sqrt(len(draws))
    assert abs(draws.mean() - mu) <= 3 * se + 1e-12
    f = gpr.sample_posterior(model, 500, np.random.default_rng(1))
    assert f(xt) == f(xt)
    for s in range(20):
        g = gpr.sample_posterior(model, 500, np.random.default_rng(s))
        vals = g(X)
        band = 5 * np.sqrt(model.hyper.noise_variance + model.jitter) * model.y_std + 1e-6
        assert np.all(np.abs(vals - y) <= max(band, 5 * 1e-3 * model.y_std))


def test_sample_posterior_primal_branch():
    # More training points than features exercises the weight-space solve.
    rng = np.random.default_rng(8)
    X = rng.random((40, 2))
    y = X[:, 0] - X[:, 1]
    b = BoxBounds.uniform(0.0, 1.0, 2)
    model = gpr.fit(X, y, b, restarts=2, rng=rng)
    f = gpr.sample_posterior(model, 30, np.random.default_rng(0))
    assert np.all(np.isfinite(f(rng.random((5, 2)))))


def test_fast_sampled_evaluation_close_to_exact():
    rng = np.random.default_rng(9)
    X = rng.random((10, 5))
    model = gpr.fit(X, rng.standard_normal(10), BOUNDS5, restarts=2, rng=rng)
    f = gpr.sample_posterior(model, 500, rng)
    Xs = rng.random((50, 5))
    assert np.allclose(f(Xs, fast=True), f(Xs), rtol=1e-5, atol=1e-5 * model.y_std)
