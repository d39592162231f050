"""Minimal dense network machinery: a two-layer perceptron and Adam.

Forward and backward passes are written out by hand; the networks here
are small enough that explicit numpy matmuls are both fast and easy to
check against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpSpec:
    """Two-layer perceptron shape: in -> hidden -> out with one ReLU."""

    in_dim: int
    out_dim: int
    hidden: int = 256
    depth: int = 2

    def __post_init__(self):
        if min(self.in_dim, self.out_dim, self.hidden) < 1:
            raise ValueError("all dimensions must be positive")
        if self.depth != 2:
            raise ValueError("only depth-2 perceptrons are supported")


class TwoLayerMLP:
    """Linear -> ReLU -> Linear with manual backprop."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.W1 = rng.normal(0.0, np.sqrt(2.0 / spec.in_dim), (spec.in_dim, spec.hidden))
        self.b1 = np.zeros(spec.hidden)
        self.W2 = rng.normal(0.0, 0.1 / np.sqrt(spec.hidden), (spec.hidden, spec.out_dim))
        self.b2 = np.zeros(spec.out_dim)

    def forward(self, x: np.ndarray):
        """Returns (out, cache); x has shape (B, in_dim)."""
        h = np.maximum(x @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2, (x, h)

    def backward(self, cache, dout: np.ndarray):
        """Gradients for dout of shape (B, out_dim); returns (grads, dx)."""
        x, h = cache
        grads = {
            "W2": h.T @ dout,
            "b2": dout.sum(axis=0),
        }
        dh = dout @ self.W2.T
        dh[h <= 0.0] = 0.0
        grads["W1"] = x.T @ dh
        grads["b1"] = dh.sum(axis=0)
        return grads, dh @ self.W1.T

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        self.W1 = np.asarray(values["W1"], dtype=np.float64).reshape(self.W1.shape)
        self.b1 = np.asarray(values["b1"], dtype=np.float64).reshape(self.b1.shape)
        self.W2 = np.asarray(values["W2"], dtype=np.float64).reshape(self.W2.shape)
        self.b2 = np.asarray(values["b2"], dtype=np.float64).reshape(self.b2.shape)


class Adam:
    """Adam with bias correction; state keyed like the parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
