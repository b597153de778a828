"""Adam over named parameter dicts.

Parameters are nd Arrays whose buffers the optimizer updates in place; moment
state is keyed by name and iterated in sorted order so update order (and thus
every f32 rounding) is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import nd


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, nd.Array], grads: nd.Gradients) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name in sorted(params):
            p = params[name]
            g = grads[p]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / b1t
            vhat = v / b2t
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(np.float32)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers under prefixed names, for checkpointing."""
        out = {}
        for name in sorted(self.m):
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = int(t)
        for key, val in arrays.items():
            if key.startswith("adam.m."):
                self.m[key[len("adam.m."):]] = val.copy()
            elif key.startswith("adam.v."):
                self.v[key[len("adam.v."):]] = val.copy()
