"""Exact Gaussian process regression with a squared-exponential ARD kernel."""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .data import CapacityError, ForwardModel, Normalizer, RegressionDataset

__all__ = ["GPRegressor", "GPNumericError", "gp_fit", "se_ard_kernel", "MAX_GP_POINTS"]

MAX_GP_POINTS = 5000
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LOG_LENGTHSCALE_BOUNDS = (-3.0, 3.0)
LOG_SIGNAL_BOUNDS = (-4.0, 4.0)
LOG_NOISE_BOUNDS = (math.log(1e-8), 0.0)


class GPNumericError(ArithmeticError):
    """Kernel matrix stayed indefinite after the largest jitter."""


def se_ard_kernel(A, B, lengthscales, signal_var):
    A = np.asarray(A, dtype=float) / lengthscales
    B = np.asarray(B, dtype=float) / lengthscales
    sq = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return signal_var * np.exp(-0.5 * np.maximum(sq, 0.0))


def _cholesky(K):
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(len(K))), jitter
        except np.linalg.LinAlgError:
            continue
    raise GPNumericError("kernel matrix not positive definite after jitter escalation")


class _Hyper:
    __slots__ = ("lengthscales", "signal_var", "noise_var")

    def __init__(self, lengthscales, signal_var, noise_var):
        self.lengthscales = np.asarray(lengthscales, dtype=float)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)

    @classmethod
    def from_log(cls, theta, dim):
        return cls(np.exp(theta[:dim]), math.exp(theta[dim]), math.exp(theta[dim + 1]))

    def to_dict(self):
        return {"lengthscales": self.lengthscales.tolist(), "signal_var": self.signal_var, "noise_var": self.noise_var}


def _neg_log_marginal(theta, X, y):
    h = _Hyper.from_log(theta, X.shape[1])
    K = se_ard_kernel(X, X, h.lengthscales, h.signal_var) + h.noise_var * np.eye(len(X))
    try:
        L, _ = _cholesky(K)
    except GPNumericError:
        return 1e10
    alpha = cho_solve((L, True), y)
    return float(0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * len(y) * math.log(2 * math.pi))


class GPRegressor:
    """One independent GP per output column.

    Targets are centred and scaled internally; hyperparameters refer to
    the scaled targets.
    """

    def __init__(self, seed: int = 0, de_generations: int = 60, de_popsize: int = 5):
        self.seed = seed
        self.de_generations = de_generations
        self.de_popsize = de_popsize
        self.X = None

    @property
    def hyperparameters(self):
        return [h.to_dict() for h in self._hyper]

    def fit(self, X, y, optimize=True, hyperparameters=None):
        from ..sysid import DESettings, differential_evolution

        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(y, dtype=float)
        Y = Y.reshape(len(X), -1)
        n, dim = X.shape
        if n < 2:
            raise ValueError("GP needs at least two points")
        if n > MAX_GP_POINTS:
            raise CapacityError(f"exact GP limited to {MAX_GP_POINTS} points, got {n}")
        self.X = X
        self.y_mean = Y.mean(axis=0)
        std = Y.std(axis=0)
        self.y_std = np.where(std > 1e-12, std, 1.0)
        Z = (Y - self.y_mean) / self.y_std

        if hyperparameters is not None and not isinstance(hyperparameters, (list, tuple)):
            hyperparameters = [hyperparameters] * Z.shape[1]
        self._hyper, self._L, self._alpha = [], [], []
        for k in range(Z.shape[1]):
            if optimize:
                bounds = [LOG_LENGTHSCALE_BOUNDS] * dim + [LOG_SIGNAL_BOUNDS, LOG_NOISE_BOUNDS]
                res = differential_evolution(
                    lambda t, z=Z[:, k]: _neg_log_marginal(t, X, z),
                    bounds,
                    DESettings(popsize_factor=self.de_popsize, max_generations=self.de_generations, seed=self.seed + k),
                )
                h = _Hyper.from_log(res.best, dim)
            else:
                hp = hyperparameters[k]
                ls = np.broadcast_to(np.asarray(hp["lengthscales"], dtype=float), (dim,))
                h = _Hyper(ls, hp["signal_var"], hp["noise_var"])
            K = se_ard_kernel(X, X, h.lengthscales, h.signal_var) + h.noise_var * np.eye(n)
            L, _ = _cholesky(K)
            self._hyper.append(h)
            self._L.append(L)
            self._alpha.append(cho_solve((L, True), Z[:, k]))
        return self

    def predict(self, Xs, return_var=False):
        if self.X is None:
            raise RuntimeError("GP has not been fit")
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        means, variances = [], []
        for h, L, alpha in zip(self._hyper, self._L, self._alpha):
            Ks = se_ard_kernel(Xs, self.X, h.lengthscales, h.signal_var)
            means.append(Ks @ alpha)
            if return_var:
                if L is None:
                    K = se_ard_kernel(self.X, self.X, h.lengthscales, h.signal_var) + h.noise_var * np.eye(len(self.X))
                    L, _ = _cholesky(K)
                v = solve_triangular(L, Ks.T, lower=True)
                variances.append(np.maximum(h.signal_var - np.sum(v**2, axis=0), 0.0))
        mean = np.column_stack(means) * self.y_std + self.y_mean
        if not return_var:
            return mean if mean.shape[1] > 1 else mean[:, 0]
        var = np.column_stack(variances) * self.y_std**2
        if mean.shape[1] == 1:
            return mean[:, 0], var[:, 0]
        return mean, var

    def to_parameters(self) -> dict:
        return {
            "X": self.X.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
            "alpha": [a.tolist() for a in self._alpha],
            "hyperparameters": self.hyperparameters,
        }

    @classmethod
    def from_parameters(cls, params: dict) -> "GPRegressor":
        gp = cls()
        gp.X = np.asarray(params["X"], dtype=float)
        gp.y_mean = np.asarray(params["y_mean"], dtype=float)
        gp.y_std = np.asarray(params["y_std"], dtype=float)
        gp._alpha = [np.asarray(a, dtype=float) for a in params["alpha"]]
        gp._hyper = [_Hyper(h["lengthscales"], h["signal_var"], h["noise_var"]) for h in params["hyperparameters"]]
        gp._L = [None] * len(gp._alpha)
        return gp


def gp_fit(data: RegressionDataset, kernel: dict | None = None, seed: int = 0, de_generations: int = 60) -> ForwardModel:
    """Fit a GP forward model.

    With ``kernel=None`` the hyperparameters maximise the log marginal
    likelihood; otherwise ``kernel`` supplies ``lengthscales``,
    ``signal_var`` and ``noise_var`` (in normalised units) for every output.
    """
    if len(data) > MAX_GP_POINTS:
        raise CapacityError(f"exact GP limited to {MAX_GP_POINTS} points, got {len(data)}")
    x_norm = Normalizer.fit(data.inputs)
    y_norm = Normalizer.fit(data.targets)
    gp = GPRegressor(seed=seed, de_generations=de_generations)
    gp.fit(x_norm.normalize(data.inputs), y_norm.normalize(data.targets), optimize=kernel is None, hyperparameters=kernel)
    model = ForwardModel("gp", x_norm, y_norm, gp.to_parameters(), {"n_train": len(data)})
    model._impl = gp
    return model
