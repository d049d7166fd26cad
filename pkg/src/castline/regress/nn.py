"""Fully connected tanh network trained with Adam, written against numpy."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import ForwardModel, Normalizer, RegressionDataset

log = logging.getLogger(__name__)

__all__ = ["NNConfig", "MLP", "Adam", "TrainingDiverged", "nn_train", "weighted_loss", "PRESETS"]


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class NNConfig:
    hidden_layers: int = 3
    hidden_units: int = 128
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 500
    patience: int = 50
    seed: int = 0
    # training precision; float32 roughly halves the cost of an epoch
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.hidden_layers, self.hidden_units, self.batch_size, self.epochs) < 1:
            raise ValueError("layer, unit, batch and epoch counts must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self):
        return asdict(self)


# small net for reference-only data, larger one for simulated/combined data
PRESETS = {
    "reference": NNConfig(hidden_layers=3, hidden_units=32, batch_size=16),
    "simulated": NNConfig(hidden_layers=3, hidden_units=128, batch_size=64),
}


class MLP:
    def __init__(self, sizes, rng: np.random.Generator | None = None, dtype=np.float64):
        self.sizes = list(sizes)
        self.weights, self.biases = [], []
        if rng is not None:
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                W = rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)
                self.weights.append(W.astype(dtype))
                self.biases.append(np.zeros(fan_out, dtype=dtype))

    @property
    def params(self):
        return self.weights + self.biases

    def forward(self, X, cache=False):
        acts = [X]
        a = X
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = z if k == last else np.tanh(z)
            acts.append(a)
        return (a, acts) if cache else a

    predict = forward

    def loss_and_grads(self, X, Y, w):
        """Weighted mean squared error ``sum w|f(x)-y|^2 / sum w`` and its gradients."""
        out, acts = self.forward(X, cache=True)
        err = out - Y
        wsum = w.sum()
        loss = float(np.sum(w * np.sum(err**2, axis=1)) / wsum)
        delta = (2.0 / wsum) * w[:, None] * err
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        return loss, gw + gb

    def copy(self):
        other = MLP(self.sizes)
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def to_parameters(self):
        return {
            "sizes": self.sizes,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_parameters(cls, params):
        net = cls(params["sizes"])
        net.weights = [np.asarray(W, dtype=float) for W in params["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in params["biases"]]
        return net


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self._tmp = [np.empty_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps), without temporaries
        step = self.lr / c1
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp
            np.multiply(v, 1.0 / c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= step
            p -= tmp


def weighted_loss(net: MLP, X, Y, w) -> float:
    """Full-batch weighted loss with exactly rounded sums."""
    err = net.forward(X) - Y
    per = w * np.sum(np.asarray(err, dtype=float) ** 2, axis=1)
    return math.fsum(per.tolist()) / math.fsum(np.asarray(w, dtype=float).tolist())


def nn_train(data: RegressionDataset, cfg: NNConfig | None = None, callback=None) -> ForwardModel:
    """Train a forward model with mini-batch Adam.

    Stops after ``cfg.epochs`` or when the full-batch training loss has not
    improved for ``cfg.patience`` epochs; the best epoch's weights are kept.
    """
    cfg = cfg or NNConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    x_norm = Normalizer.fit(data.inputs)
    y_norm = Normalizer.fit(data.targets)
    dtype = np.dtype(cfg.dtype)
    X = x_norm.normalize(data.inputs).astype(dtype)
    Y = y_norm.normalize(data.targets).astype(dtype)
    w = data.weights
    wt = w.astype(dtype)
    sizes = [X.shape[1]] + [cfg.hidden_units] * cfg.hidden_layers + [Y.shape[1]]
    net = MLP(sizes, rng, dtype)
    opt = Adam(net.params, lr=cfg.learning_rate)

    history = []
    best_loss, best_net, since_best = math.inf, net.copy(), 0
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = net.loss_and_grads(X[idx], Y[idx], wt[idx])
            opt.step(grads)
        loss = weighted_loss(net, X, Y, w)
        if not math.isfinite(loss):
            raise TrainingDiverged(epoch)
        history.append(loss)
        if callback is not None:
            callback(epoch, loss)
        if loss < best_loss:
            best_loss, best_net, since_best = loss, net.copy(), 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    log.info("NN training stopped after %d epochs, loss %.3e", len(history), best_loss)
    info = {"final_loss": best_loss, "epochs": len(history), "loss_history": history, "config": cfg.to_dict()}
    model = ForwardModel("nn", x_norm, y_norm, best_net.to_parameters(), info)
    # predictions always run in double precision, as they do after a reload
    model._impl = MLP.from_parameters(model.parameters)
    return model
