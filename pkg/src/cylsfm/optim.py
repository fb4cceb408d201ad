"""Adaptive-moment gradient updates over named parameter dictionaries."""

from __future__ import annotations

import numpy as np


class Adam:
    """Classic Adam with bias correction; state is keyed like the params."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr) -> None:
        """In-place update; ``lr`` may be a scalar or a per-key dict."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            rate = lr[k] if isinstance(lr, dict) else lr
            params[k] -= rate * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict:
        """Moment arrays plus step counter, for checkpointing."""
        out = {"adam.t": np.array([float(self.t)])}
        for k, v in self.m.items():
            out[f"adam.m.{k}"] = v
        for k, v in self.v.items():
            out[f"adam.v.{k}"] = v
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.t = int(arrays["adam.t"][0])
        for k in self.m:
            self.m[k] = np.array(arrays[f"adam.m.{k}"])
            self.v[k] = np.array(arrays[f"adam.v.{k}"])
