"""Multilayer perceptrons with hand-written reverse-mode gradients.

Small enough networks (two 256-wide hidden layers) that plain numpy
matmuls are the whole story; no autograd framework needed.
"""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected net, rectified-linear hidden units.

    ``out`` selects the head: "linear" (critic) or "tanh" (actor, keeps
    actions inside [-1, 1]). Weights use fan-in uniform scaling, biases
    start at zero; ``final_scale`` shrinks the last layer so a fresh actor
    outputs near-zero actions.
    """

    def __init__(self, sizes, out: str = "linear",
                 rng: np.random.Generator | None = None,
                 final_scale: float = 1.0, dtype=np.float64):
        if out not in ("linear", "tanh"):
            raise ValueError(f"unknown head {out!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.sizes = tuple(int(s) for s in sizes)
        self.out = out
        self.dtype = dtype
        self.W = []
        self.b = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.W.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype))
            self.b.append(np.zeros(fan_out, dtype=dtype))
        if final_scale != 1.0:
            self.W[-1] *= final_scale

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def forward(self, x: np.ndarray):
        """Returns (output, cache) for a (B, in) batch."""
        h = np.asarray(x, dtype=self.dtype)
        acts = [h]
        for l in range(self.n_layers - 1):
            h = np.maximum(h @ self.W[l] + self.b[l], 0.0)
            acts.append(h)
        y = acts[-1] @ self.W[-1] + self.b[-1]
        if self.out == "tanh":
            y = np.tanh(y)
        return y, (acts, y)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dy: np.ndarray):
        """Gradients of sum(dy * y) w.r.t. parameters and the input.

        Returns ((dW list, db list), dx).
        """
        acts, y = cache
        delta = np.asarray(dy, dtype=self.dtype)
        if self.out == "tanh":
            delta = delta * (1.0 - y * y)
        dW = [None] * self.n_layers
        db = [None] * self.n_layers
        for l in range(self.n_layers - 1, -1, -1):
            dW[l] = acts[l].T @ delta
            db[l] = delta.sum(axis=0)
            delta = delta @ self.W[l].T
            if l > 0:
                delta = delta * (acts[l] > 0.0)
        return (dW, db), delta

    # -- parameter plumbing ----------------------------------------------

    def parameters(self):
        return self.W + self.b

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)

    def clone(self) -> "Mlp":
        twin = Mlp(self.sizes, out=self.out, rng=np.random.default_rng(0),
                   dtype=self.dtype)
        twin.copy_from(self)
        return twin

    def state_dict(self) -> dict:
        out = {"sizes": np.array(self.sizes), "out": np.array(self.out)}
        for i, w in enumerate(self.W):
            out[f"W{i}"] = w
        for i, b in enumerate(self.b):
            out[f"b{i}"] = b
        return out

    def load_state_dict(self, d: dict) -> None:
        for i in range(self.n_layers):
            np.copyto(self.W[i], d[f"W{i}"])
            np.copyto(self.b[i], d[f"b{i}"])


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Exponential moving average: target <- (1 - tau) target + tau online."""
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - tau
        t += tau * o


class Adam:
    """Adam with the usual (0.9, 0.999) moments and bias correction."""

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": np.array(self.t)}
        for i, m in enumerate(self.m):
            out[f"m{i}"] = m
        for i, v in enumerate(self.v):
            out[f"v{i}"] = v
        return out

    def load_state_dict(self, d: dict) -> None:
        self.t = int(d["t"])
        for i in range(len(self.m)):
            np.copyto(self.m[i], d[f"m{i}"])
            np.copyto(self.v[i], d[f"v{i}"])
