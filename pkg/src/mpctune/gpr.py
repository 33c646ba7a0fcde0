"""Gaussian-process regression with a constant mean and anisotropic SE kernel.

Inputs are mapped to the unit box using the problem bounds and targets are
standardized before fitting.  Hyperparameters are fitted by multi-start
L-BFGS-B on the log marginal likelihood in log space.  Posterior function
draws use random Fourier features conditioned on the training data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, lapack, solve_triangular
from scipy.optimize import minimize

from .core import BoxBounds, UsageError

log = logging.getLogger(__name__)

JITTER_FLOOR = 1e-6
MAX_JITTER = 1e-2
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-4, 1e2)
NOISE_BOUNDS = (JITTER_FLOOR, 1.0)
MEAN_BOUNDS = (-10.0, 10.0)
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GPHyperparameters:
    constant_mean: float
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def to_vector(self) -> np.ndarray:
        """``[mean, log sf2, log l_1..l_N, log sn2]``."""
        return np.concatenate([[self.constant_mean, np.log(self.signal_variance)],
                               np.log(self.lengthscales), [np.log(self.noise_variance)]])

    @classmethod
    def from_vector(cls, v) -> "GPHyperparameters":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(np.exp(v[1])), np.exp(v[2:-1]), float(np.exp(v[-1])))


def _vector_bounds(dim: int):
    log = np.log
    return ([MEAN_BOUNDS, (log(SIGNAL_BOUNDS[0]), log(SIGNAL_BOUNDS[1]))]
            + [(log(LENGTHSCALE_BOUNDS[0]), log(LENGTHSCALE_BOUNDS[1]))] * dim
            + [(log(NOISE_BOUNDS[0]), log(NOISE_BOUNDS[1]))])


def se_kernel(A, B, signal_variance, lengthscales) -> np.ndarray:
    A = np.asarray(A, dtype=float) / lengthscales
    B = np.asarray(B, dtype=float) / lengthscales
    sq = (np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T)
    return signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def _sq_dists_per_dim(X) -> np.ndarray:
    d = X[:, None, :] - X[None, :, :]
    return d * d


def _factor(K: np.ndarray, jitter: float = 0.0):
    """Cholesky with jitter escalation; returns (L, jitter_used)."""
    n = K.shape[0]
    j = jitter
    while True:
        try:
            return cholesky(K + j * np.eye(n), lower=True), j
        except LinAlgError:
            j = JITTER_FLOOR if j == 0.0 else j * 10.0
            if j > MAX_JITTER:
                raise


def log_marginal_likelihood(vector, X, y, *, grad: bool = False, sqd=None):
    """Log marginal likelihood of standardized data under ``vector`` hypers.

    With ``grad=True`` also returns the gradient w.r.t. the vector
    (mean directly, the remaining entries in log space).
    """
    h = GPHyperparameters.from_vector(vector)
    n = X.shape[0]
    Kf = se_kernel(X, X, h.signal_variance, h.lengthscales)
    K = Kf + h.noise_variance * np.eye(n)
    L = cholesky(K, lower=True)
    r = y - h.constant_mean
    alpha = cho_solve((L, True), r)
    lml = -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG2PI
    if not grad:
        return lml
    if sqd is None:
        sqd = _sq_dists_per_dim(X)
    # Inverse from the Cholesky factor; LAPACK fills the lower triangle only.
    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise LinAlgError(f"dpotri failed with info={info}")
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    WK = W * Kf
    g = np.empty(len(vector))
    g[0] = np.sum(alpha)
    g[1] = 0.5 * np.sum(WK)
    ls2 = h.lengthscales ** 2
    g[2:-1] = 0.5 * np.tensordot(WK, sqd, axes=([0, 1], [0, 1])) / ls2
    g[-1] = 0.5 * h.noise_variance * np.trace(W)
    return lml, g


@dataclass(frozen=True)
class GPModel:
    """A conditioned GP for one objective; read-only after construction."""

    hyper: GPHyperparameters
    train_inputs: np.ndarray      # unit-box inputs
    train_targets: np.ndarray     # standardized targets
    factor: np.ndarray            # lower Cholesky factor of K + noise I
    alpha: np.ndarray
    jitter: float
    x_lower: np.ndarray
    x_span: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def condition(cls, X, y, bounds: BoxBounds, hyper: GPHyperparameters) -> "GPModel":
        """Build the model for fixed hyperparameters (no optimization)."""
        Xu, ys, y_mean, y_std = _prepare(X, y, bounds)
        return cls._build(Xu, ys, y_mean, y_std, bounds, hyper)

    @classmethod
    def _build(cls, Xu, ys, y_mean, y_std, bounds, hyper):
        K = se_kernel(Xu, Xu, hyper.signal_variance, hyper.lengthscales)
        K[np.diag_indices_from(K)] += hyper.noise_variance
        L, jitter = _factor(K)
        if jitter > 0:
            log.debug("GP factorization needed jitter %.1e", jitter)
        alpha = cho_solve((L, True), ys - hyper.constant_mean)
        return cls(hyper, Xu, ys, L, alpha, jitter, bounds.theta_min.copy(),
                   bounds.span.copy(), y_mean, y_std)

    @property
    def n(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def prior_std(self) -> float:
        return float(np.sqrt(self.hyper.signal_variance) * self.y_std)

    @property
    def prior_mean(self) -> float:
        return float(self.y_mean + self.y_std * self.hyper.constant_mean)

    def to_unit(self, theta) -> np.ndarray:
        return (np.atleast_2d(np.asarray(theta, dtype=float)) - self.x_lower) / self.x_span

    def predict(self, theta):
        """Posterior mean and standard deviation of the latent function.

        Accepts one point (returns floats) or a matrix of points.
        """
        single = np.asarray(theta).ndim == 1
        Xs = self.to_unit(theta)
        h = self.hyper
        Ks = se_kernel(Xs, self.train_inputs, h.signal_variance, h.lengthscales)
        mu = h.constant_mean + Ks @ self.alpha
        v = solve_triangular(self.factor, Ks.T, lower=True)
        var = np.maximum(h.signal_variance - np.sum(v * v, axis=0), 0.0)
        mu = self.y_mean + self.y_std * mu
        sigma = self.y_std * np.sqrt(var)
        if single:
            return float(mu[0]), float(sigma[0])
        return mu, sigma

    def log_marginal_likelihood(self) -> float:
        return float(log_marginal_likelihood(self.hyper.to_vector(),
                                             self.train_inputs, self.train_targets))


def _prepare(X, y, bounds: BoxBounds):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise UsageError("need at least one training point")
    if X.shape[0] != y.size:
        raise UsageError("X and y have different lengths")
    if X.shape[1] != bounds.dim:
        raise UsageError("X does not match the bounds dimension")
    if not np.all(np.isfinite(y)):
        raise UsageError("training targets must be finite")
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not np.isfinite(y_std) or y_std <= 1e-12 * max(1.0, abs(y_mean)):
        y_std = 1.0
    Xu = (X - bounds.theta_min) / bounds.span
    return Xu, (y - y_mean) / y_std, y_mean, y_std


def _random_start(rng, dim):
    return np.concatenate([
        [rng.uniform(-0.5, 0.5), np.log(rng.uniform(0.2, 5.0))],
        np.log(rng.uniform(0.05, 2.0, size=dim)),
        [np.log(10 ** rng.uniform(-6, -2))],
    ])


def fit(X, y, bounds: BoxBounds, restarts: int = 10,
        rng: Optional[np.random.Generator] = None,
        init: Optional[GPHyperparameters] = None,
        maxiter: int = 200) -> GPModel:
    """Fit hyperparameters by multi-start gradient ascent on the log evidence.

    The first start is ``init`` if given (warm start), otherwise a fixed
    default; the remaining ``restarts - 1`` are drawn from ``rng``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    Xu, ys, y_mean, y_std = _prepare(X, y, bounds)
    dim = bounds.dim
    vb = _vector_bounds(dim)
    lo = np.array([b[0] for b in vb])
    hi = np.array([b[1] for b in vb])
    sqd = _sq_dists_per_dim(Xu)

    def objective(v):
        try:
            lml, g = log_marginal_likelihood(v, Xu, ys, grad=True, sqd=sqd)
        except LinAlgError:
            return 1e10, np.zeros_like(v)
        if not np.isfinite(lml) or not np.all(np.isfinite(g)):
            return 1e10, np.zeros_like(v)
        return -lml, -g

    if init is not None:
        first = np.clip(init.to_vector(), lo, hi)
    else:
        first = np.concatenate([[0.0, 0.0], np.full(dim, np.log(0.3)), [np.log(1e-4)]])
    starts = [first] + [np.clip(_random_start(rng, dim), lo, hi)
                        for _ in range(max(0, restarts - 1))]

    best_v, best_f = None, np.inf
    for v0 in starts:
        res = minimize(objective, v0, jac=True, method="L-BFGS-B", bounds=vb,
                       options={"maxiter": maxiter})
        if res.fun < best_f and np.all(np.isfinite(res.x)):
            best_v, best_f = res.x, res.fun
    if best_v is None or best_f >= 1e10:
        log.warning("GP hyperparameter search failed on all starts; using default")
        best_v = first
    hyper = GPHyperparameters.from_vector(best_v)
    return GPModel._build(Xu, ys, y_mean, y_std, bounds, hyper)


def predict(model: GPModel, theta):
    return model.predict(theta)


_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SampledFunction:
    """One approximate posterior draw; deterministic once constructed."""

    frequencies: np.ndarray   # (F, N) in unit-box coordinates
    phases: np.ndarray        # (F,)
    weights: np.ndarray       # (F,)
    amplitude: float          # sqrt(2 * signal_variance / F)
    constant_mean: float
    x_lower: np.ndarray
    x_span: np.ndarray
    y_mean: float
    y_std: float

    def features(self, Xu, fast: bool = False) -> np.ndarray:
        arg = Xu @ self.frequencies.T + self.phases
        if fast:
            # Reduce in double precision, then a single-precision cosine.
            arg -= _TWO_PI * np.rint(arg / _TWO_PI)
            return self.amplitude * np.cos(arg.astype(np.float32)).astype(float)
        return self.amplitude * np.cos(arg)

    def __call__(self, theta, fast: bool = False):
        """Evaluate the draw; ``fast`` trades ~1e-7 relative accuracy for speed."""
        single = np.asarray(theta).ndim == 1
        Xu = (np.atleast_2d(np.asarray(theta, dtype=float)) - self.x_lower) / self.x_span
        f = self.constant_mean + self.features(Xu, fast) @ self.weights
        out = self.y_mean + self.y_std * f
        return float(out[0]) if single else out


def sample_posterior(model: GPModel, n_features: int = 500,
                     rng: Optional[np.random.Generator] = None) -> SampledFunction:
    """Draw a function from the RFF approximation of the GP posterior."""
    if n_features < 1:
        raise UsageError("n_features must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    h = model.hyper
    dim = model.train_inputs.shape[1]
    W = rng.standard_normal((n_features, dim)) / h.lengthscales
    b = rng.uniform(0.0, 2.0 * np.pi, n_features)
    amp = float(np.sqrt(2.0 * h.signal_variance / n_features))
    Phi = amp * np.cos(model.train_inputs @ W.T + b)
    r = model.train_targets - h.constant_mean
    noise = h.noise_variance + model.jitter
    n = Phi.shape[0]
    w_prior = rng.standard_normal(n_features)
    eps = rng.standard_normal(n) * np.sqrt(noise)
    if n <= n_features:
        # Pathwise update of a prior draw: w = w0 + Phi^T (Phi Phi^T + s I)^-1 (r - Phi w0 - e).
        L, _ = _factor(Phi @ Phi.T + noise * np.eye(n))
        w = w_prior + Phi.T @ cho_solve((L, True), r - Phi @ w_prior - eps)
    else:
        A = Phi.T @ Phi + noise * np.eye(n_features)
        L, _ = _factor(A)
        mean = cho_solve((L, True), Phi.T @ r)
        w = mean + np.sqrt(noise) * solve_triangular(L.T, w_prior, lower=False)
    return SampledFunction(W, b, w, amp, h.constant_mean, model.x_lower, model.x_span,
                           model.y_mean, model.y_std)
