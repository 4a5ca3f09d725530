"""Moment-based (Adam) parameter updates over named array groups."""

from __future__ import annotations

import numpy as np


class Adam:
    """Updates arrays in place; group order is fixed, so runs are repeatable.

    select(mask) keeps moment state aligned when Gaussians are pruned;
    extend(n) appends zero-state rows after splits.
    """

    def __init__(self, learning_rates: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rates = dict(learning_rates)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def _state(self, name, shape, dtype):
        if name not in self.m or self.m[name].shape != shape:
            self.m[name] = np.zeros(shape, dtype=dtype)
            self.v[name] = np.zeros(shape, dtype=dtype)
        return self.m[name], self.v[name]

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, lr in self.learning_rates.items():
            p = params[name]
            g = np.asarray(grads[name], dtype=p.dtype)
            m, v = self._state(name, p.shape, p.dtype)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def select(self, keep) -> None:
        for name in list(self.m):
            self.m[name] = self.m[name][keep]
            self.v[name] = self.v[name][keep]

    def extend(self, count: int) -> None:
        for name in list(self.m):
            pad = np.zeros((count,) + self.m[name].shape[1:], dtype=self.m[name].dtype)
            self.m[name] = np.concatenate([self.m[name], pad])
            self.v[name] = np.concatenate([self.v[name], pad])
