"""Gaussian process surrogate with a squared-exponential ARD kernel.

Hyperparameters live in log space, ``theta = [log l_1..l_d, log sf2, log sn2]``,
and are fit by maximizing the log marginal likelihood with L-BFGS-B from
several starting points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

LOG_LENGTHSCALE_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_SIGNAL_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_NOISE_BOUNDS = (np.log(1e-6), np.log(1.0))
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


class FitFailed(RuntimeError):
    pass


def _sq_dists(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    As = A / lengthscales
    Bs = B / lengthscales
    d2 = (As * As).sum(1)[:, None] + (Bs * Bs).sum(1)[None, :] - 2.0 * As @ Bs.T
    return np.maximum(d2, 0.0)


def se_ard_kernel(A, B, lengthscales, signal_variance) -> np.ndarray:
    return signal_variance * np.exp(-0.5 * _sq_dists(np.atleast_2d(A), np.atleast_2d(B), np.asarray(lengthscales)))


def _cholesky(K: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise FitFailed("kernel matrix not positive definite even with jitter 1e-4")


def log_marginal_likelihood(theta, X, y, return_grad: bool = True):
    """Log marginal likelihood of standardized targets ``y`` and its gradient wrt ``theta``."""
    theta = np.asarray(theta, dtype=float)
    X = np.atleast_2d(X)
    n, d = X.shape
    ls = np.exp(theta[:d])
    sf2 = np.exp(theta[d])
    sn2 = np.exp(theta[d + 1])
    Kf = se_ard_kernel(X, X, ls, sf2)
    K = Kf + sn2 * np.eye(n)
    L = _cholesky(K)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2.0 * np.pi)
    if not return_grad:
        return lml
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty(d + 2)
    for k in range(d):
        diff = X[:, k][:, None] - X[:, k][None, :]
        dK = Kf * (diff * diff) / (ls[k] * ls[k])
        grad[k] = 0.5 * np.sum(W * dK)
    grad[d] = 0.5 * np.sum(W * Kf)
    grad[d + 1] = 0.5 * sn2 * np.trace(W)
    return lml, grad


@dataclass
class GPModel:
    inputs: np.ndarray
    outputs: np.ndarray  # standardized
    kernel_lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    y_mean: float
    y_std: float
    chol: np.ndarray
    alpha: np.ndarray
    log_likelihood: float

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([np.log(self.kernel_lengthscales), [np.log(self.signal_variance), np.log(self.noise_variance)]])


def _dedupe(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    sums = np.zeros(len(uniq))
    np.add.at(sums, inverse, y)
    counts = np.bincount(inverse, minlength=len(uniq))
    return uniq, sums / counts


def gp_fit(X, y, restarts: int = 3, seed: int | np.random.Generator = 0, theta0=None) -> GPModel:
    """Fit a GP to unit-cube inputs ``X`` and raw objectives ``y`` (duplicate inputs averaged)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    X, y = _dedupe(X, y)
    if X.shape[0] < 2:
        raise ValueError("gp_fit needs at least two distinct observations")
    n, d = X.shape
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 0:
        y_std = 1.0
    z = (y - y_mean) / y_std
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    bounds = [LOG_LENGTHSCALE_BOUNDS] * d + [LOG_SIGNAL_BOUNDS, LOG_NOISE_BOUNDS]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.concatenate([np.full(d, np.log(0.3)), [0.0, np.log(1e-3)]]) if theta0 is None else np.clip(theta0, lo, hi)]
    for _ in range(max(restarts, 1) - 1):
        starts.append(lo + rng.random(d + 2) * (hi - lo))

    def objective(theta):
        try:
            lml, grad = log_marginal_likelihood(theta, X, z)
        except FitFailed:
            return 1e10, np.zeros_like(theta)
        return -lml, -grad

    best_theta, best_val = None, np.inf
    for start in starts:
        res = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 200})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    if best_theta is None or best_val >= 1e10:
        raise FitFailed("every restart failed")
    return _assemble(X, z, best_theta, y_mean, y_std)


def _assemble(X, z, theta, y_mean, y_std) -> GPModel:
    d = X.shape[1]
    ls = np.exp(theta[:d])
    sf2 = float(np.exp(theta[d]))
    sn2 = float(np.exp(theta[d + 1]))
    K = se_ard_kernel(X, X, ls, sf2) + sn2 * np.eye(X.shape[0])
    L = _cholesky(K)
    alpha = cho_solve((L, True), z)
    lml = log_marginal_likelihood(theta, X, z, return_grad=False)
    return GPModel(X, z, ls, sf2, sn2, y_mean, y_std, L, alpha, float(lml))


def gp_with_hyperparameters(X, y, lengthscales, signal_variance, noise_variance) -> GPModel:
    """GP posterior for fixed hyperparameters (no fitting)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    X, y = _dedupe(X, y)
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    theta = np.concatenate([np.log(np.broadcast_to(lengthscales, X.shape[1])), [np.log(signal_variance), np.log(noise_variance)]])
    return _assemble(X, (y - y_mean) / y_std, theta, y_mean, y_std)


def gp_predict(model: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance, in the original objective units."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = se_ard_kernel(Xq, model.inputs, model.kernel_lengthscales, model.signal_variance)
    mean = Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True)
    var = np.maximum(model.signal_variance - (v * v).sum(0), 0.0)
    return mean * model.y_std + model.y_mean, var * model.y_std**2
