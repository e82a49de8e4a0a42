"""Dense tensors with reverse-mode gradient propagation.

Every op returns a new :class:`Tensor` holding its parents and a closure that
pushes the output gradient back into them. ``backward()`` walks the graph in
reverse topological order. Values are float32 unless :func:`precision` is
active, which the gradient checks use to run in float64.
"""
from __future__ import annotations

import contextlib

import numpy as np

_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for newly created tensors."""
    global _DTYPE
    saved = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = saved


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block; used for inference."""
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def accumulate_at(self, index, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[index] += g

    def backward(self, grad=None):
        """Propagate gradients from this tensor to every leaf that requires them."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        if grad is None:
            grad = np.ones_like(self.data)
        self.accumulate(grad)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)
                # interior gradients are not needed after propagation
                if node.parents:
                    node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DTYPE))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data, parents, backward_fn):
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, parents=parents, backward_fn=backward_fn)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _make(out, (a, b), back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))

    return _make(out, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), back)


def matmul(a, b):
    """``a @ b`` where ``b`` is 1-D or 2-D and ``a`` has any leading batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim not in (1, 2):
        raise ValueError(f"matmul expects a 1-D or 2-D right operand, got {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"shape mismatch in matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        if b.ndim == 1:
            if a.requires_grad:
                a.accumulate(g[..., None] * b.data)
            if b.requires_grad:
                b.accumulate(a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1))
            return
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            b.accumulate(a2.T @ g.reshape(-1, b.shape[1]))

    return _make(out, (a, b), back)


def transpose(a):
    out = a.data.T

    def back(g):
        a.accumulate(g.T)

    return _make(out, (a,), back)


def reshape(a, shape):
    old = a.shape
    out = a.data.reshape(shape)

    def back(g):
        a.accumulate(g.reshape(old))

    return _make(out, (a,), back)


def getitem(a, index):
    out = a.data[index]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a.accumulate(full)

    return _make(out, (a,), back)


def select(a, i, axis=1):
    """Slice index ``i`` out of ``axis``; cheaper than ``getitem`` in loops."""
    index = (slice(None),) * axis + (i,)
    out = a.data[index]

    def back(g):
        a.accumulate_at(index, g)

    return _make(out, (a,), back)


def tanh(a):
    out = np.tanh(a.data)

    def back(g):
        a.accumulate(g * (1.0 - out * out))

    return _make(out, (a,), back)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a):
    out = _sigmoid(a.data)

    def back(g):
        a.accumulate(g * out * (1.0 - out))

    return _make(out, (a,), back)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t.accumulate(piece)

    return _make(out, tensors, back)


def stack(tensors, axis=0):
    out = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate(np.take(g, i, axis=axis))

    return _make(out, tensors, back)


def take_rows(table, ids):
    """Gather rows of a 2-D ``table``; the result has shape ``ids.shape + (D,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table.accumulate(full)

    return _make(out, (table,), back)


def sum_all(a):
    out = np.asarray(a.data.sum())

    def back(g):
        a.accumulate(np.broadcast_to(g, a.shape))

    return _make(out, (a,), back)


def masked_softmax(scores, mask=None):
    """Softmax over the last axis; positions where ``mask`` is 0 get weight 0."""
    x = scores.data
    if mask is not None:
        x = np.where(mask > 0, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        scores.accumulate(out * (g - dot))

    return _make(out, (scores,), back)


def weighted_sum(weights, values):
    """``sum_k weights[..., k] * values[..., k, :]``."""
    out = np.einsum("...k,...kd->...d", weights.data, values.data)

    def back(g):
        if weights.requires_grad:
            weights.accumulate(np.einsum("...d,...kd->...k", g, values.data))
        if values.requires_grad:
            values.accumulate(weights.data[..., :, None] * g[..., None, :])

    return _make(out, (weights, values), back)


def cross_entropy(logits, targets, mask=None):
    """Mean negative log-likelihood of ``targets`` over the positions where ``mask`` is 1.

    ``logits`` has shape (N, V); ``targets`` and ``mask`` have shape (N,).
    """
    targets = np.asarray(targets, dtype=np.int64)
    if mask is None:
        mask = np.ones(targets.shape, dtype=logits.data.dtype)
    mask = np.asarray(mask, dtype=logits.data.dtype)
    count = mask.sum()
    if count == 0:
        raise ValueError("cross_entropy: every position is padding")
    x = logits.data
    shifted = x - x.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsumexp
    rows = np.arange(targets.shape[0])
    nll = -logp[rows, targets]
    out = np.asarray((nll * mask).sum() / count, dtype=x.dtype)

    def back(g):
        p = np.exp(logp)
        p[rows, targets] -= 1.0
        logits.accumulate(p * (mask / count)[:, None] * g)

    return _make(out, (logits,), back)


def token_nll(logits, targets):
    """Per-position negative log-likelihood (no graph); used for reporting."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return -logp[np.arange(len(targets)), np.asarray(targets)]


def gru_cell(x, h, W, U, b, mask=None):
    """One GRU step with gates ordered (update, reset, candidate).

    ``W`` is (E, 3H), ``U`` is (H, 3H) and ``b`` is (3H,). With update gate z,
    reset gate r and candidate n::

        z = sigmoid(x W_z + h U_z + b_z)
        r = sigmoid(x W_r + h U_r + b_r)
        n = tanh(x W_n + (r * h) U_n + b_n)
        h' = (1 - z) * h + z * n

    Where ``mask`` is 0 (padding) the previous state passes through unchanged.
    """
    H = h.shape[-1]
    if W.shape[1] != 3 * H or U.shape != (H, 3 * H) or b.shape != (3 * H,):
        raise ValueError(f"GRU parameter shapes do not match hidden size {H}")
    if x.shape[-1] != W.shape[0]:
        raise ValueError(f"GRU input extent {x.shape[-1]} != {W.shape[0]}")
    xd, hd = x.data, h.data
    a = xd @ W.data + b.data
    zr = _sigmoid(a[..., : 2 * H] + hd @ U.data[:, : 2 * H])
    z, r = zr[..., :H], zr[..., H:]
    rh = r * hd
    n = np.tanh(a[..., 2 * H :] + rh @ U.data[:, 2 * H :])
    out = hd + z * (n - hd)
    if mask is not None:
        m = np.asarray(mask, dtype=hd.dtype)[..., None]
        out = hd + m * (out - hd)

    def back(g):
        if mask is not None:
            g_cell = g * m
            dh = g * (1.0 - m)
        else:
            g_cell = g
            dh = np.zeros_like(hd)
        dz = g_cell * (n - hd)
        dn = g_cell * z
        dh = dh + g_cell * (1.0 - z)
        dan = dn * (1.0 - n * n)
        drh = dan @ U.data[:, 2 * H :].T
        dr = drh * hd
        dh = dh + drh * r
        dzr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=-1)
        dh = dh + dzr @ U.data[:, : 2 * H].T
        da = np.concatenate([dzr, dan], axis=-1)
        if h.requires_grad:
            h.accumulate(dh)
        if x.requires_grad:
            x.accumulate(da @ W.data.T)
        if W.requires_grad:
            W.accumulate(xd.reshape(-1, xd.shape[-1]).T @ da.reshape(-1, 3 * H))
        if U.requires_grad:
            h2 = hd.reshape(-1, H)
            gU = np.empty_like(U.data)
            gU[:, : 2 * H] = h2.T @ dzr.reshape(-1, 2 * H)
            gU[:, 2 * H :] = rh.reshape(-1, H).T @ dan.reshape(-1, H)
            U.accumulate(gU)
        if b.requires_grad:
            b.accumulate(da.reshape(-1, 3 * H).sum(axis=0))

    return _make(out, (x, h, W, U, b), back)
