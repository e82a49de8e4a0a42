"""Recurrent cells, attention, MLP bridges and the loss, built on :mod:`.tensor`.

Layers hold references to tensors living in a :class:`ParamSet` under a name
prefix, so several layers can share storage (e.g. the tied embedding table).
All layers accept a leading batch dimension. The unbatched helpers at the
bottom of the module are thin wrappers for single sequences.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamSet
from .tensor import Tensor


class GRU:
    def __init__(self, params: ParamSet, prefix, in_size, hidden, rng=None):
        self.prefix = prefix
        self.in_size = in_size
        self.hidden = hidden
        if rng is not None:
            params.uniform(f"{prefix}.W", (in_size, 3 * hidden), rng)
            params.uniform(f"{prefix}.U", (hidden, 3 * hidden), rng)
            params.uniform(f"{prefix}.b", (3 * hidden,), rng)
        self.W = params[f"{prefix}.W"]
        self.U = params[f"{prefix}.U"]
        self.b = params[f"{prefix}.b"]

    def step(self, x, h, mask=None):
        return T.gru_cell(x, h, self.W, self.U, self.b, mask)

    def run(self, inputs, h0=None, mask=None, reverse=False):
        """Run over ``inputs`` of shape (B, T, E).

        Returns the per-position states (a list of T tensors of shape (B, H),
        in input order) and the final state. With ``reverse`` the sequence is
        consumed right to left, so the final state is the one at position 0.
        Masked positions carry the previous state forward.
        """
        B, steps = inputs.shape[0], inputs.shape[1]
        if steps < 1:
            raise ValueError("GRU.run needs at least one position")
        h = h0 if h0 is not None else Tensor(np.zeros((B, self.hidden), dtype=inputs.data.dtype))
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        states = [None] * steps
        for t in order:
            x_t = T.select(inputs, t, axis=1)
            h = self.step(x_t, h, None if mask is None else mask[:, t])
            states[t] = h
        return states, h


class BiGRU:
    def __init__(self, params: ParamSet, prefix, in_size, hidden, rng=None):
        self.fwd = GRU(params, f"{prefix}.fwd", in_size, hidden, rng)
        self.bwd = GRU(params, f"{prefix}.bwd", in_size, hidden, rng)
        self.hidden = 2 * hidden

    def run(self, inputs, mask=None):
        """Return stacked states (B, T, 2H) and the final vector (B, 2H).

        The final vector joins the forward state at the last valid position
        with the backward state at position 0.
        """
        f_states, f_last = self.fwd.run(inputs, mask=mask)
        b_states, b_first = self.bwd.run(inputs, mask=mask, reverse=True)
        states = T.concat([T.stack(f_states, axis=1), T.stack(b_states, axis=1)], axis=-1)
        return states, T.concat([f_last, b_first], axis=-1)


class Attention:
    """Additive attention: score_k = v . tanh(q W_q + key_k W_k).

    ``out_proj`` maps the attended context back to the query size; it is the
    only route by which attention reaches the decoder output.
    """

    def __init__(self, params: ParamSet, prefix, query_size, key_size, attn_size, rng=None):
        if rng is not None:
            params.uniform(f"{prefix}.Wq", (query_size, attn_size), rng)
            params.uniform(f"{prefix}.Wk", (key_size, attn_size), rng)
            params.uniform(f"{prefix}.v", (attn_size,), rng)
            params.uniform(f"{prefix}.out", (key_size, query_size), rng)
        self.Wq = params[f"{prefix}.Wq"]
        self.Wk = params[f"{prefix}.Wk"]
        self.v = params[f"{prefix}.v"]
        self.out = params[f"{prefix}.out"]

    def project_keys(self, keys):
        return keys @ self.Wk

    def __call__(self, query, keys, key_proj=None, mask=None):
        """``query`` (B, Hq), ``keys`` (B, K, Dk) -> (context (B, Dk), weights (B, K))."""
        if key_proj is None:
            key_proj = self.project_keys(keys)
        q = query @ self.Wq
        if q.ndim == 1:
            hidden = T.tanh(key_proj + q)
        else:
            hidden = T.tanh(key_proj + T.reshape(q, (q.shape[0], 1, q.shape[1])))
        scores = hidden @ self.v
        weights = T.masked_softmax(scores, mask)
        return T.weighted_sum(weights, keys), weights


class MLP:
    """tanh hidden layer, linear to the output size, then tanh."""

    def __init__(self, params: ParamSet, prefix, in_size, hidden, out_size, rng=None, final_tanh=True):
        if rng is not None:
            params.uniform(f"{prefix}.W1", (in_size, hidden), rng)
            params.uniform(f"{prefix}.b1", (hidden,), rng)
            params.uniform(f"{prefix}.W2", (hidden, out_size), rng)
            params.uniform(f"{prefix}.b2", (out_size,), rng)
        self.W1 = params[f"{prefix}.W1"]
        self.b1 = params[f"{prefix}.b1"]
        self.W2 = params[f"{prefix}.W2"]
        self.b2 = params[f"{prefix}.b2"]
        self.in_size = in_size
        self.final_tanh = final_tanh

    def __call__(self, x):
        if x.shape[-1] != self.in_size:
            raise ValueError(f"MLP input extent {x.shape[-1]} != {self.in_size}")
        h = T.tanh(x @ self.W1 + self.b1)
        out = h @ self.W2 + self.b2
        return T.tanh(out) if self.final_tanh else out


# Unbatched helpers with the signatures used throughout the docs and tests.

def gru_step(x_t, h_prev, gru: GRU):
    return gru.step(x_t, h_prev)


def encode_sequence(xs, fwd: GRU, bwd: GRU | None = None):
    """Encode a list of input vectors.

    Unidirectional: returns (h_1..h_T, h_T). Bidirectional: per-position
    concatenation of forward and backward states, and the final vector
    joining forward h_T with backward h_1.
    """
    if len(xs) == 0:
        raise ValueError("encode_sequence: empty sequence")
    inputs = T.reshape(T.stack(list(xs), axis=0), (1, len(xs), xs[0].shape[-1]))
    f_states, f_last = fwd.run(inputs)
    f_states = [T.reshape(s, (fwd.hidden,)) for s in f_states]
    f_last = T.reshape(f_last, (fwd.hidden,))
    if bwd is None:
        return f_states, f_last
    b_states, b_first = bwd.run(inputs, reverse=True)
    b_states = [T.reshape(s, (bwd.hidden,)) for s in b_states]
    states = [T.concat([f, b]) for f, b in zip(f_states, b_states)]
    return states, T.concat([f_last, T.reshape(b_first, (bwd.hidden,))])


def attend(query, keys, attention: Attention):
    """Attend with a single query over a list of key vectors."""
    if len(keys) == 0:
        raise ValueError("attend: no keys")
    return attention(query, T.stack(list(keys), axis=0))


def mlp_bridge(x, mlp: MLP):
    return mlp(x)


def cross_entropy_loss(logits, targets, pad_id=0):
    """Mean -log softmax(logit)[target] over non-pad targets.

    ``logits`` is a list of (V,) tensors or a single (N, V) tensor.
    """
    if isinstance(logits, (list, tuple)):
        if len(logits) != len(targets):
            raise ValueError("cross_entropy_loss: logits and targets differ in length")
        logits = T.stack(list(logits), axis=0)
    targets = np.asarray(targets, dtype=np.int64)
    return T.cross_entropy(logits, targets, (targets != pad_id).astype(logits.data.dtype))
