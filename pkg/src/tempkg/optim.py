"""Adam optimizer over named parameter arrays."""

from __future__ import annotations

import numpy as np

from . import _kernels


class AdamState:
    """Per-parameter first/second moment accumulators plus the step counter.

    ``step`` applies the standard bias-corrected Adam update in place and
    returns the parameter dict for convenience. Every parameter must have a
    gradient entry; a missing key is an error rather than a silent no-op.
    """

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        missing = [name for name in params if name not in grads]
        if missing:
            raise KeyError(f"missing gradient for parameter(s): {', '.join(sorted(missing))}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            _kernels.adam_update(
                p, np.asarray(grads[name], dtype=np.float64),
                self.m[name], self.v[name],
                self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
            )
        return params
