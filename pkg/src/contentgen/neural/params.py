"""Named parameter storage and the Adam optimizer."""
from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, default_dtype

INIT_SCALE = 0.08


class ParamSet:
    """Named trainable tensors plus Adam moment slots.

    Parameters listed in ``frozen`` receive no updates from :func:`adam_update`.
    """

    def __init__(self):
        self.tensors: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.frozen: set[str] = set()

    def add(self, name, value):
        if name in self.tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=default_dtype()), requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def uniform(self, name, shape, rng, scale=INIT_SCALE):
        return self.add(name, rng.uniform(-scale, scale, size=shape))

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self):
        return sorted(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def num_values(self):
        return sum(t.data.size for t in self.tensors.values())

    def arrays(self):
        return {name: t.data for name, t in self.tensors.items()}

    def load_arrays(self, arrays):
        for name, arr in arrays.items():
            t = self.tensors[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {t.data.shape} vs {arr.shape}")
            t.data = np.array(arr, dtype=t.data.dtype)

    def freeze(self, prefixes):
        for name in self.tensors:
            if any(name.startswith(p) for p in prefixes):
                self.frozen.add(name)


def adam_update(params: ParamSet, lr=0.0003, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected Adam step in place, then clear gradients.

    A parameter without a gradient is treated as having a zero gradient.
    """
    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    params.step += 1
    step = params.step
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for name, t in params.items():
        if name in params.frozen:
            t.grad = None
            continue
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        m = params.m.get(name)
        if m is None:
            m = params.m[name] = np.zeros_like(t.data)
            params.v[name] = np.zeros_like(t.data)
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        t.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        t.grad = None


def grad_norm(params: ParamSet):
    total = 0.0
    for t in params.tensors.values():
        if t.grad is not None:
            total += float(np.sum(t.grad.astype(np.float64) ** 2))
    return math.sqrt(total)
