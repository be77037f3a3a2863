"""Gaussian-process surrogates for one objective of one local problem.

Inputs are mapped to the unit box through the set's domain and targets are
standardised.  The kernel is an anisotropic squared exponential whose
hyperparameters maximise the log marginal likelihood (analytic gradient,
L-BFGS-B, several restarts).  Monte-Carlo standard errors of the observed
means set a floor on the noise variance.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.optimize import minimize

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LENGTHSCALE_INITS = (0.1, 0.3, 1.0)
N_RESTARTS = 5
MIN_NOISE = 1e-8

# log-space box for [log lengthscales..., log signal var, log noise var]
LOG_LS_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_SF_BOUNDS = (np.log(1e-3), np.log(1e3))
LOG_SN_MAX = np.log(1.0)


class FitError(ValueError):
    pass


def _as_inputs(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == d:
        return X
    if d == 0:
        raise FitError("zero-dimensional inputs must be passed as an (n, 0) array")
    return X.reshape(-1, d)


def se_kernel(A: np.ndarray, B: np.ndarray, lengthscales, signal_var: float) -> np.ndarray:
    """Squared-exponential kernel between the rows of ``A`` and ``B``."""
    ls = np.asarray(lengthscales, dtype=float)
    if A.shape[1] == 0:
        return np.full((len(A), len(B)), float(signal_var))
    a = A / ls
    b = B / ls
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2 * a @ b.T
    return signal_var * np.exp(-0.5 * np.maximum(d2, 0.0))


def _cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, climbing the jitter ladder if needed."""
    n = len(K)
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTER_LADDER:
        L, info = lapack.dpotrf(K + jitter * scale * np.eye(n), lower=1, clean=1)
        if info == 0:
            return L, jitter
    raise np.linalg.LinAlgError("kernel matrix is not positive definite even with jitter")


def _sq_dists(X: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape ``(d, n, n)``."""
    diff = X.T[:, :, None] - X.T[:, None, :]
    return diff * diff


def log_marginal_likelihood(theta, X, y, noise_floor: float = MIN_NOISE, grad: bool = True, sq_dists=None):
    """Log evidence of standardised data and its gradient in ``theta``.

    ``theta = [log l_1..log l_d, log signal_var, log noise_var]``; the
    effective noise is ``noise_floor + exp(theta[-1])``.
    """
    theta = np.asarray(theta, dtype=float)
    n, d = X.shape
    D2 = _sq_dists(X) if sq_dists is None else sq_dists
    inv_ls2 = np.exp(-2 * theta[:d])
    sf = np.exp(theta[d])
    sn_free = np.exp(theta[d + 1])
    noise = noise_floor + sn_free
    K0 = sf * np.exp(-0.5 * np.tensordot(inv_ls2, D2, axes=1)) if d else np.full((n, n), sf)
    L, _ = _cholesky(K0 + noise * np.eye(n))
    alpha = lapack.dpotrs(L, y, lower=1)[0]
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
    if not grad:
        return float(lml)
    Kinv = lapack.dpotri(L, lower=1)[0]
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    WK = W * K0
    g = np.empty(d + 2)
    if d:
        g[:d] = 0.5 * inv_ls2 * np.tensordot(D2, WK, axes=([1, 2], [0, 1]))
    g[d] = 0.5 * WK.sum()
    g[d + 1] = 0.5 * np.trace(W) * sn_free
    return float(lml), g


class GaussianProcess:
    """Fitted GP posterior over one objective.

    Parameters
    ----------
    X : (n, d) array
        Inputs in original units.
    y : (n,) array
        Observed objective values.
    bounds : (d, 2) array
        Domain box used for input normalisation.
    std_error : (n,) array, optional
        Standard errors of ``y``; their mean square sets the noise floor.
    rng : numpy Generator, optional
        Source of the random restarts.
    theta : array, optional
        Fixed hyperparameters (skips optimisation).
    """

    def __init__(self, X, y, bounds, std_error=None, rng=None, theta=None):
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        y = np.asarray(y, dtype=float).ravel()
        X = _as_inputs(X, len(bounds))
        if len(y) == 0:
            raise FitError("at least one observation is required")
        if len(y) != len(X):
            raise FitError("X and y have different lengths")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise FitError("non-finite training data")
        self.bounds = bounds
        self.X_raw = X
        self.y_raw = y
        self.Xn = self.normalize(X)
        self.y_mean = float(y.mean())
        spread = float(y.std())
        self.y_std = spread if spread > 1e-12 * max(1.0, abs(self.y_mean)) else 1.0
        self.yn = (y - self.y_mean) / self.y_std
        se = np.zeros_like(y) if std_error is None else np.asarray(std_error, dtype=float).ravel()
        self.noise_floor = max(float(np.mean(se**2)) / self.y_std**2, MIN_NOISE)
        d = X.shape[1]
        if theta is None:
            theta = self._optimize(rng if rng is not None else np.random.default_rng(0))
        self.theta = np.asarray(theta, dtype=float)
        self.lengthscales = np.exp(self.theta[:d])
        self.signal_var = float(np.exp(self.theta[d]))
        self.noise_var = self.noise_floor + float(np.exp(self.theta[d + 1]))
        K = se_kernel(self.Xn, self.Xn, self.lengthscales, self.signal_var) + self.noise_var * np.eye(len(y))
        self._chol, self.jitter = _cholesky(K)
        self._alpha = lapack.dpotrs(self._chol, self.yn, lower=1)[0]

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def normalize(self, X) -> np.ndarray:
        X = _as_inputs(X, self.dim)
        width = self.bounds[:, 1] - self.bounds[:, 0]
        return (X - self.bounds[:, 0]) / np.where(width > 0, width, 1.0)

    def _param_bounds(self):
        d = self.dim
        return [LOG_LS_BOUNDS] * d + [LOG_SF_BOUNDS, (np.log(1e-12), LOG_SN_MAX)]

    def _optimize(self, rng) -> np.ndarray:
        d = self.dim
        n = len(self.yn)
        starts = [np.concatenate([np.full(d, np.log(l)), [0.0, np.log(1e-4)]]) for l in LENGTHSCALE_INITS]
        for _ in range(N_RESTARTS - len(starts)):
            starts.append(
                np.concatenate(
                    [rng.uniform(np.log(0.05), np.log(2.0), d), [rng.uniform(-1, 1)], [rng.uniform(np.log(1e-6), np.log(1e-2))]]
                )
            )
        if n == 1:
            return starts[-1 if d == 0 else 2]

        D2 = _sq_dists(self.Xn)

        def objective(theta):
            try:
                v, g = log_marginal_likelihood(theta, self.Xn, self.yn, self.noise_floor, sq_dists=D2)
            except np.linalg.LinAlgError:
                return 1e25, np.zeros_like(theta)
            return -v, -g

        best, best_val = starts[0], np.inf
        for s in starts:
            res = minimize(objective, s, jac=True, method="L-BFGS-B", bounds=self._param_bounds())
            if np.isfinite(res.fun) and res.fun < best_val - 1e-12:
                best, best_val = res.x, res.fun
        return best

    def posterior(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Latent posterior mean and variance in objective units."""
        Xs = self.normalize(X)
        Ks = se_kernel(Xs, self.Xn, self.lengthscales, self.signal_var)
        mean = Ks @ self._alpha
        v = solve_triangular(self._chol, Ks.T, lower=True, check_finite=False)
        var = self.signal_var - (v * v).sum(axis=0)
        var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mean, var * self.y_std**2

    def mean(self, X) -> np.ndarray:
        return self.posterior(X)[0]

    def log_marginal_likelihood(self) -> float:
        return log_marginal_likelihood(self.theta, self.Xn, self.yn, self.noise_floor, grad=False)


def fit(X, y, bounds, std_error=None, rng=None) -> GaussianProcess:
    return GaussianProcess(X, y, bounds, std_error=std_error, rng=rng)
