"""Small numpy multilayer perceptrons with hand-written backprop and Adam."""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected net: ReLU hidden layers, linear output.

    ``params`` is a flat list ``[W1, b1, W2, b2, ...]`` so optimizers and
    checkpoints can treat every net the same way.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator | None = None,
                 dtype=np.float32, zero_output: bool = False, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        rng = rng or np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            if last and zero_output:
                W = np.zeros((fan_in, fan_out))
            elif last:
                W = rng.uniform(-3e-3, 3e-3, size=(fan_in, fan_out)) * out_scale
            else:
                # He-uniform for ReLU layers
                lim = np.sqrt(6.0 / fan_in)
                W = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.params.append(W.astype(self.dtype))
            self.params.append(np.zeros(fan_out, dtype=self.dtype))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input dimension {x.shape[-1]} != expected {self.in_dim}")
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            h = h @ W + b
            if k < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    __call__ = forward

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray):
        """Return (parameter gradients, input gradient) for a cached forward pass.

        Gradients are sums over the batch; callers scale for means.
        """
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = np.asarray(grad_out, dtype=self.dtype)
        for k in reversed(range(n_layers)):
            if k < n_layers - 1:
                g = g * (acts[k + 1] > 0)
            inp = acts[k]
            if inp.ndim == 1:
                grads[2 * k] = np.outer(inp, g)
                grads[2 * k + 1] = g.copy()
            else:
                grads[2 * k] = inp.T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
        return grads, g

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.dtype = self.dtype
        other.params = [p.copy() for p in self.params]
        return other

    def soft_update_from(self, source: "Mlp", tau: float) -> None:
        for tgt, src in zip(self.params, source.params):
            if tau == 1.0:
                tgt[...] = src
            else:
                tgt *= 1.0 - tau
                tgt += tau * src

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)

    def lipschitz_bound(self) -> float:
        """Product of layer spectral norms; ReLU is 1-Lipschitz."""
        bound = 1.0
        for W in self.params[0::2]:
            bound *= float(np.linalg.norm(W.astype(np.float64), 2))
        return bound


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        step = self.lr * np.sqrt(c2) / c1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= (step * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)
