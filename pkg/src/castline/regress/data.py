"""Datasets, normalisation and the shared forward-model container."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..actions import Action, CartesianPoint

__all__ = [
    "RegressionDataset",
    "Normalizer",
    "ForwardModel",
    "ModelStateError",
    "CapacityError",
    "combine_datasets",
]


class ModelStateError(RuntimeError):
    """Prediction requested from a model that holds no trained state."""


class CapacityError(ValueError):
    """Dataset too large for exact GP inference."""


@dataclass
class RegressionDataset:
    """Raw action vectors with endpoint targets.

    ``inputs`` holds unnormalised ``(theta1, r1, theta2, r2, alpha, v_max)``
    rows; models carry their own normalisation.
    """

    inputs: np.ndarray
    targets: np.ndarray
    weights: np.ndarray | None = None
    source: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).reshape(len(self.inputs), -1)
        n = len(self.inputs)
        self.weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        self.source = np.full(n, "simulated") if self.source is None else np.asarray(self.source, dtype=object)
        if not (len(self.targets) == len(self.weights) == len(self.source) == n):
            raise ValueError("inputs, targets, weights and source must have equal lengths")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self):
        return len(self.inputs)

    @classmethod
    def from_records(cls, records: Sequence, source: str | None = None) -> "RegressionDataset":
        if len(records) == 0:
            return cls(np.empty((0, 6)), np.empty((0, 2)))
        X = np.array([r.action.as_tuple() for r in records])
        Y = np.array([r.final for r in records])
        src = [source or r.meta.get("source", "simulated") for r in records]
        return cls(X, Y, None, np.array(src, dtype=object))

    def subset(self, idx) -> "RegressionDataset":
        idx = np.asarray(idx)
        return RegressionDataset(self.inputs[idx], self.targets[idx], self.weights[idx], self.source[idx])

    def split(self, holdout: float, seed: int = 0):
        """Seeded (train, held-out) split."""
        perm = np.random.default_rng(seed).permutation(len(self))
        n_test = int(round(holdout * len(self)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


@dataclass
class Normalizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("normalisation scales must be positive")

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalizer":
        data = np.asarray(data, dtype=float)
        scale = data.std(axis=0)
        # constant columns (e.g. a fixed r1) pass through unscaled
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(data.mean(axis=0), scale)

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["scale"]))


@dataclass
class ForwardModel:
    """Action -> final endpoint regressor (``backend`` is ``"gp"`` or ``"nn"``)."""

    backend: str
    x_norm: Normalizer | None = None
    y_norm: Normalizer | None = None
    parameters: dict | None = None
    info: dict = field(default_factory=dict)
    _impl: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.backend not in ("gp", "nn"):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def trained(self) -> bool:
        return self.parameters is not None

    def _core(self):
        if not self.trained:
            raise ModelStateError("model has not been trained")
        if self._impl is None:
            if self.backend == "nn":
                from .nn import MLP

                self._impl = MLP.from_parameters(self.parameters)
            else:
                from .gp import GPRegressor

                self._impl = GPRegressor.from_parameters(self.parameters)
        return self._impl

    def predict_array(self, X) -> np.ndarray:
        """Predicted endpoints for rows of raw action vectors, shape (n, 2)."""
        core = self._core()
        Z = self.x_norm.normalize(np.atleast_2d(X))
        return self.y_norm.denormalize(core.predict(Z))

    def predict(self, a: Action | Sequence[float]) -> CartesianPoint:
        vec = a.as_array() if isinstance(a, Action) else np.asarray(a, dtype=float)
        out = self.predict_array(vec.reshape(1, -1))[0]
        return CartesianPoint(float(out[0]), float(out[1]))

    def to_dict(self) -> dict:
        if not self.trained:
            raise ModelStateError("cannot serialise an untrained model")
        return {
            "backend": self.backend,
            "normalization": {"inputs": self.x_norm.to_dict(), "targets": self.y_norm.to_dict()},
            "parameters": _jsonable(self.parameters),
            "info": _jsonable(self.info),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForwardModel":
        norm = d["normalization"]
        return cls(
            d["backend"],
            Normalizer.from_dict(norm["inputs"]),
            Normalizer.from_dict(norm["targets"]),
            d["parameters"],
            d.get("info", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def combine_datasets(
    real: RegressionDataset,
    sim: RegressionDataset,
    upsample_target: float = 0.35,
    real_weight: float = 2.0,
    seed: int = 0,
) -> RegressionDataset:
    """Mix reference and simulated rows.

    Reference rows are duplicated at random until they make up
    ``upsample_target`` of the result and are weighted ``real_weight``.
    """
    if not 0 < upsample_target < 1:
        raise ValueError("upsample_target must lie in (0, 1)")
    if real_weight < 1:
        raise ValueError("real_weight must be >= 1")
    if len(real) == 0:
        raise ValueError("cannot upsample an empty reference set")
    rng = np.random.default_rng(seed)
    n_real, n_sim = len(real), len(sim)
    wanted = int(math.floor(upsample_target * n_sim / (1.0 - upsample_target) + 0.5))
    extra = max(0, wanted - n_real)
    idx = np.arange(n_real)
    if extra:
        idx = np.concatenate([idx, rng.choice(n_real, size=extra, replace=extra > n_real)])
    X = np.concatenate([real.inputs[idx], sim.inputs])
    Y = np.concatenate([real.targets[idx], sim.targets])
    W = np.concatenate([np.full(len(idx), float(real_weight)), np.ones(n_sim)])
    S = np.concatenate([np.full(len(idx), "reference", dtype=object), np.full(n_sim, "simulated", dtype=object)])
    order = rng.permutation(len(X))
    return RegressionDataset(X[order], Y[order], W[order], S[order])
