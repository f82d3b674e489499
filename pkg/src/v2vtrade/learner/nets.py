"""Small numpy multilayer perceptrons with hand-written backprop and Adam."""

from __future__ import annotations

import numpy as np


class MLP:
    """ReLU hidden layers, linear output. ``params`` alternates weight and bias arrays."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float | None = 3e-3, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if k == n_layers - 1 and out_scale is not None:
                bound = out_scale
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype))
            self.params.append(rng.uniform(-bound, bound, fan_out).astype(dtype))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        for k in range(self.n_layers):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < self.n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of sum(dout * output) with respect to params and input."""
        grads: list[np.ndarray] = [None] * len(self.params)
        d = dout
        for k in reversed(range(self.n_layers)):
            if k < self.n_layers - 1:
                d = d * (acts[k + 1] > 0)
            grads[2 * k] = acts[k].T @ d
            grads[2 * k + 1] = d.sum(axis=0)
            d = d @ self.params[2 * k].T
        return grads, d

    def copy(self) -> "MLP":
        other = object.__new__(MLP)
        other.sizes = self.sizes
        other.params = [p.copy() for p in self.params]
        return other

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, v: np.ndarray) -> None:
        k = 0
        for p in self.params:
            p[...] = v[k:k + p.size].reshape(p.shape)
            k += p.size


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}
