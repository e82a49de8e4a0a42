"""Independent reference implementations used to cross-check the package."""
from __future__ import annotations

import math

import numpy as np


def brute_bleu(ref, hyp, n):
    """Order-n clipped precision times brevity penalty, by explicit enumeration."""
    hyp_grams = [tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1)]
    if not hyp_grams:
        return 0.0
    ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    matched = 0
    for g in set(hyp_grams):
        matched += min(hyp_grams.count(g), ref_grams.count(g))
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return 100.0 * matched / len(hyp_grams) * bp


def _cos(u, v):
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(a * a for a in v))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(a * b for a, b in zip(u, v)) / (nu * nv)


def greedy_oracle(ref, hyp, table):
    """Symmetric greedy matching with plain double loops."""
    r = [table[t] for t in ref if t in table]
    h = [table[t] for t in hyp if t in table]

    def one_way(xs, ys):
        total = 0.0
        for x in xs:
            best = -math.inf
            for y in ys:
                best = max(best, _cos(x, y))
            total += best
        return total / len(xs)

    return 100.0 * 0.5 * (one_way(r, h) + one_way(h, r))


def numeric_grad(f, arr, index, eps=1e-6):
    """Central difference of scalar ``f()`` with respect to ``arr[index]``."""
    saved = arr[index]
    arr[index] = saved + eps
    up = f()
    arr[index] = saved - eps
    down = f()
    arr[index] = saved
    return (up - down) / (2 * eps)


def gradcheck(loss_fn, tensors, rng, samples=None, eps=1e-6):
    """Compare analytic and numeric gradients; returns the relative error.

    ``loss_fn`` builds the graph and returns a scalar tensor. Each tensor in
    ``tensors`` is checked at every entry, or at ``samples`` random entries.
    The error is ||analytic - numeric|| / max(||analytic||, ||numeric||) over
    all checked entries together.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic, numeric = [], []
    for t in tensors:
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = [np.unravel_index(i, t.data.shape) for i in range(t.data.size)]
        if samples is not None and len(flat) > samples:
            flat = [flat[i] for i in rng.choice(len(flat), samples, replace=False)]
        for idx in flat:
            analytic.append(grad[idx])
            numeric.append(numeric_grad(lambda: loss_fn().item(), t.data, idx, eps))
    a, n = np.array(analytic), np.array(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)
