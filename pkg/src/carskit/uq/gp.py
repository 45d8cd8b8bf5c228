"""Exact Gaussian-process regression baseline.

Each CARS spectrum is one input vector; every output channel is an
independent GP sharing one RBF kernel, so a single Cholesky factorization
serves all channels.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

from ..errors import NumericError
from ..spectrum import VARIANCE_FLOOR, PredictiveDistribution
from .config import TrainConfig, UqMethod

JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


def rbf_kernel(A: np.ndarray, B: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    d2 = cdist(A, B, "sqeuclidean")
    return signal_var * np.exp(-0.5 * d2 / lengthscale**2)


def median_lengthscale(X: np.ndarray) -> float:
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def stable_cholesky(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    scale = float(np.mean(np.diag(K))) or 1.0
    for jitter in JITTERS:
        try:
            return cholesky(K + jitter * scale * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericError("kernel matrix is not positive definite even with jitter")


def gp_posterior(X, Y, Xs, lengthscale, signal_var, noise_var, prior_mean=0.0):
    """Posterior mean and latent variance at ``Xs``.

    Returns ``mean`` with the trailing shape of ``Y`` and ``var`` with one
    entry per test point (shared by every output channel).
    """
    X, Xs = np.atleast_2d(X), np.atleast_2d(Xs)
    Y = np.asarray(Y, dtype=np.float64)
    K = rbf_kernel(X, X, lengthscale, signal_var) + noise_var * np.eye(len(X))
    L = stable_cholesky(K)
    alpha = cho_solve((L, True), Y - prior_mean)
    Ks = rbf_kernel(Xs, X, lengthscale, signal_var)
    mean = prior_mean + Ks @ alpha
    v = solve_triangular(L, Ks.T, lower=True)
    var = signal_var - np.sum(v**2, axis=0)
    return mean, np.maximum(var, 0.0)


class GpPredictor:
    method = UqMethod.GP_BASELINE

    def __init__(self, config: TrainConfig, X, Y, lengthscale, signal_var, noise_var):
        self.config = config
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        self.lengthscale = float(lengthscale)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        self.y_mean = self.Y.mean(axis=0)
        K = rbf_kernel(self.X, self.X, self.lengthscale, self.signal_var) + self.noise_var * np.eye(len(self.X))
        self._L = stable_cholesky(K)
        self._alpha = cho_solve((self._L, True), self.Y - self.y_mean)

    def predict(self, x) -> PredictiveDistribution:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        Ks = rbf_kernel(xs, self.X, self.lengthscale, self.signal_var)
        mean = self.y_mean + Ks @ self._alpha
        v = solve_triangular(self._L, Ks.T, lower=True)
        latent = np.maximum(self.signal_var - np.sum(v**2, axis=0), 0.0)
        var = np.repeat((latent + self.noise_var)[:, None], mean.shape[1], axis=1)
        var = np.maximum(var, VARIANCE_FLOOR)
        nrb = np.full_like(mean, np.nan)
        if single:
            return PredictiveDistribution(mean[0], var[0], nrb[0])
        return PredictiveDistribution(mean, var, nrb)

    def state(self) -> dict[str, np.ndarray]:
        return {
            "X": self.X,
            "Y": self.Y,
            "hyper": np.array([self.lengthscale, self.signal_var, self.noise_var]),
        }

    @classmethod
    def from_state(cls, config: TrainConfig, state: Mapping[str, np.ndarray]) -> "GpPredictor":
        ls, sv, nv = state["hyper"]
        return cls(config, state["X"], state["Y"], ls, sv, nv)


def _holdout_ll(X, Y, Xv, Yv, ls, sv, nv) -> float:
    mu_y = Y.mean(axis=0)
    mean, latent = gp_posterior(X, Y, Xv, ls, sv, nv, prior_mean=mu_y)
    var = np.maximum(latent + nv, VARIANCE_FLOOR)[:, None]
    return float(np.mean(-0.5 * (np.log(2 * np.pi * var) + (Yv - mean) ** 2 / var)))


def train_gp(config: TrainConfig, cars: np.ndarray, raman: np.ndarray) -> GpPredictor:
    """Fit hyperparameters by heuristic plus a held-out noise search."""
    mp = config.method_params
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(config.seed), spawn_key=(4,))))
    n = len(cars)
    idx = np.sort(rng.permutation(n)[: min(n, mp.gp_max_train)])
    X, Y = cars[idx], raman[idx]
    ls = median_lengthscale(X)
    sv = float(np.mean(Y.var(axis=0))) or 1.0
    best = mp.gp_noise_grid[0]
    n_hold = int(round(mp.gp_holdout_fraction * len(X)))
    if len(mp.gp_noise_grid) > 1 and n_hold >= 1 and len(X) - n_hold >= 1:
        perm = rng.permutation(len(X))
        hold, fit = perm[:n_hold], perm[n_hold:]
        scores = [_holdout_ll(X[fit], Y[fit], X[hold], Y[hold], ls, sv, nv) for nv in mp.gp_noise_grid]
        best = mp.gp_noise_grid[int(np.argmax(scores))]
    return GpPredictor(config, X, Y, ls, sv, best)
