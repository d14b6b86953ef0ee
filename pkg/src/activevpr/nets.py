"""Small feedforward networks with explicit weights.

Weights are plain float64 arrays so they can be serialized to JSON and
checked against finite differences. Hidden layers use softplus (a smooth
ramp), which keeps central-difference gradient checks clean; the output
layer is linear.
"""

from __future__ import annotations

import json

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    # stable: log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_grad(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    """Fully connected net: softplus hidden layers, linear output."""

    def __init__(self, layers: list[int], seed: int = 0, weights=None, biases=None):
        if len(layers) < 2 or any(s <= 0 for s in layers):
            raise ValueError(f"bad layer spec {layers}")
        self.layers = list(layers)
        self.seed = seed
        if weights is not None:
            self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
            self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                if w.shape != (layers[i], layers[i + 1]) or b.shape != (layers[i + 1],):
                    raise ValueError(f"weight shape mismatch at layer {i}")
        else:
            rng = np.random.default_rng(np.random.SeedSequence([0x4E37, seed]))
            self.weights = [
                rng.normal(0.0, np.sqrt(2.0 / layers[i]), size=(layers[i], layers[i + 1]))
                for i in range(len(layers) - 1)
            ]
            self.biases = [np.zeros(layers[i + 1]) for i in range(len(layers) - 1)]

    @property
    def in_dim(self) -> int:
        return self.layers[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backprop.

        Accepts a single vector or a batch (rows = samples).
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        if a.shape[1] != self.in_dim:
            raise ValueError(f"input dim {a.shape[1]} != expected {self.in_dim}")
        pre, acts = [], [a]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = softplus(z) if i < len(self.weights) - 1 else z
            acts.append(a)
        out = acts[-1][0] if single else acts[-1]
        return out, (pre, acts)

    def backward(self, cache, d_out: np.ndarray):
        """Gradients of a scalar loss wrt all weights given dLoss/dOutput."""
        pre, acts = cache
        delta = np.atleast_2d(np.asarray(d_out, dtype=np.float64))
        grads_w, grads_b = [], []
        for i in reversed(range(len(self.weights))):
            grads_w.append(acts[i].T @ delta)
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * softplus_grad(pre[i - 1])
        return grads_w[::-1], grads_b[::-1]

    def sgd_step(self, grads_w, grads_b, lr: float) -> None:
        for w, b, gw, gb in zip(self.weights, self.biases, grads_w, grads_b):
            w -= lr * gw
            b -= lr * gb

    def copy(self) -> "Mlp":
        return Mlp(
            self.layers,
            seed=self.seed,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    # -- flat parameter access (finite-difference checks, tests) ----------

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for w in self.weights:
            w[...] = flat[i : i + w.size].reshape(w.shape)
            i += w.size
        for b in self.biases:
            b[...] = flat[i : i + b.size]
            i += b.size

    def flat_grads(self, grads_w, grads_b) -> np.ndarray:
        return np.concatenate(
            [g.ravel() for g in grads_w] + [g.ravel() for g in grads_b]
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "activation": "softplus",
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("activation", "softplus") != "softplus":
            raise ValueError(f"unsupported activation {data['activation']!r}")
        return cls(
            list(data["layers"]),
            seed=int(data.get("seed", 0)),
            weights=data["weights"],
            biases=data["biases"],
        )

    def save(self, path, extra: dict | None = None) -> None:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
