"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`Tape` records one forward pass as a list of closures.  Operations
are coarse (affine map, fused LSTM cell, fused attention, log-softmax) so a
decoder step is a couple of dozen nodes rather than hundreds.  A tape can be
run backward exactly once.

A tape built with ``record=False`` evaluates the same code path without
storing closures; that is how inference and sampling run.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, StateError


class Var:
    __slots__ = ("value", "grad", "requires_grad", "tape")

    def __init__(self, value, requires_grad, tape):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        self.tape.backward(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Tape:
    def __init__(self, record=True):
        self.record = record
        self.nodes = []
        self.params = {}
        self._done = False

    def param(self, name, value) -> Var:
        v = Var(value, self.record, self)
        self.params[name] = v
        return v

    def const(self, value) -> Var:
        return Var(np.asarray(value), False, self)

    def backward(self, loss: Var):
        if self._done:
            raise StateError("tape already consumed by a previous backward()")
        if not self.record or not loss.requires_grad:
            raise StateError("backward() called without a recorded forward pass")
        if loss.value.size != 1:
            raise InvalidInputError("backward() needs a scalar loss")
        self._done = True
        loss.grad = np.ones_like(loss.value)
        for outs, fn in reversed(self.nodes):
            if len(outs) == 1:
                g = outs[0].grad
                if g is not None:
                    fn(g)
            else:
                grads = [o.grad for o in outs]
                if any(g is not None for g in grads):
                    fn(*[np.zeros_like(o.value) if g is None else g for o, g in zip(outs, grads)])
        self.nodes = []

    def gradients(self) -> dict:
        """Gradient per registered parameter; zeros where the loss did not reach."""
        return {name: (v.grad if v.grad is not None else np.zeros_like(v.value))
                for name, v in self.params.items()}


def _needs(tape, *vs):
    return tape.record and any(v.requires_grad for v in vs)


def _node(tape, outs, fn):
    tape.nodes.append((outs, fn))


def _acc(v, g):
    if v.requires_grad:
        v.grad = g if v.grad is None else v.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


# ---------------------------------------------------------------- elementwise

def add(a: Var, b: Var) -> Var:
    t = a.tape
    out = Var(a.value + b.value, _needs(t, a, b), t)
    if out.requires_grad:
        def bw(g):
            _acc(a, _unbroadcast(g, a.value.shape))
            _acc(b, _unbroadcast(g, b.value.shape))
        _node(t, (out,), bw)
    return out


def mul(a: Var, b: Var) -> Var:
    t = a.tape
    out = Var(a.value * b.value, _needs(t, a, b), t)
    if out.requires_grad:
        def bw(g):
            _acc(a, _unbroadcast(g * b.value, a.value.shape))
            _acc(b, _unbroadcast(g * a.value, b.value.shape))
        _node(t, (out,), bw)
    return out


def scale(a: Var, k) -> Var:
    t = a.tape
    out = Var(a.value * k, _needs(t, a), t)
    if out.requires_grad:
        _node(t, (out,), lambda g: _acc(a, g * k))
    return out


def tanh(a: Var) -> Var:
    t = a.tape
    y = np.tanh(a.value)
    out = Var(y, _needs(t, a), t)
    if out.requires_grad:
        _node(t, (out,), lambda g: _acc(a, g * (1.0 - y * y)))
    return out


def sigmoid(a: Var) -> Var:
    t = a.tape
    y = _sigmoid(a.value)
    out = Var(y, _needs(t, a), t)
    if out.requires_grad:
        _node(t, (out,), lambda g: _acc(a, g * y * (1.0 - y)))
    return out


# ---------------------------------------------------------------- linear maps

def matmul(x: Var, w: Var) -> Var:
    """``x @ w`` with ``w`` two-dimensional and ``x`` of any leading shape."""
    t = x.tape
    out = Var(x.value @ w.value, _needs(t, x, w), t)
    if out.requires_grad:
        def bw(g):
            _acc(x, g @ w.value.T)
            if w.requires_grad:
                k = w.value.shape[0]
                _acc(w, x.value.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
        _node(t, (out,), bw)
    return out


def affine(x: Var, w: Var, b: Var) -> Var:
    t = x.tape
    out = Var(x.value @ w.value + b.value, _needs(t, x, w, b), t)
    if out.requires_grad:
        def bw(g):
            _acc(x, g @ w.value.T)
            g2 = g.reshape(-1, g.shape[-1])
            if w.requires_grad:
                _acc(w, x.value.reshape(-1, w.value.shape[0]).T @ g2)
            _acc(b, g2.sum(axis=0))
        _node(t, (out,), bw)
    return out


# ---------------------------------------------------------------- structure

def concat(vs, axis=-1) -> Var:
    t = vs[0].tape
    out = Var(np.concatenate([v.value for v in vs], axis=axis), _needs(t, *vs), t)
    if out.requires_grad:
        sizes = [v.value.shape[axis] for v in vs]
        splits = np.cumsum(sizes)[:-1]

        def bw(g):
            for v, gi in zip(vs, np.split(g, splits, axis=axis)):
                _acc(v, gi)
        _node(t, (out,), bw)
    return out


def unstack(a: Var, axis=0) -> list:
    t = a.tape
    need = _needs(t, a)
    vals = np.moveaxis(a.value, axis, 0)
    outs = [Var(vals[i], need, t) for i in range(vals.shape[0])]
    if need:
        def bw(*gs):
            _acc(a, np.stack(gs, axis=axis))
        _node(t, tuple(outs), bw)
    return outs


def stack(vs, axis=0) -> Var:
    t = vs[0].tape
    out = Var(np.stack([v.value for v in vs], axis=axis), _needs(t, *vs), t)
    if out.requires_grad:
        def bw(g):
            g = np.moveaxis(g, axis, 0)
            for i, v in enumerate(vs):
                _acc(v, g[i])
        _node(t, (out,), bw)
    return out


def reshape(a: Var, shape) -> Var:
    t = a.tape
    out = Var(a.value.reshape(shape), _needs(t, a), t)
    if out.requires_grad:
        old = a.value.shape
        _node(t, (out,), lambda g: _acc(a, g.reshape(old)))
    return out


def pad(a: Var, pad_width) -> Var:
    t = a.tape
    out = Var(np.pad(a.value, pad_width), _needs(t, a), t)
    if out.requires_grad:
        idx = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.value.shape))
        _node(t, (out,), lambda g: _acc(a, g[idx]))
    return out


def rows(w: Var, start, stop) -> Var:
    """``w[start:stop]``."""
    t = w.tape
    out = Var(w.value[start:stop], _needs(t, w), t)
    if out.requires_grad:
        def bw(g):
            full = np.zeros_like(w.value)
            full[start:stop] = g
            _acc(w, full)
        _node(t, (out,), bw)
    return out


def take(table: Var, ids) -> Var:
    """Row lookup ``table[ids]`` (embedding)."""
    t = table.tape
    ids = np.asarray(ids)
    out = Var(table.value[ids], _needs(t, table), t)
    if out.requires_grad:
        def bw(g):
            full = np.zeros_like(table.value)
            np.add.at(full, ids, g)
            _acc(table, full)
        _node(t, (out,), bw)
    return out


def mask_rows(a: Var, m) -> Var:
    """Multiply by a constant mask broadcast along trailing axes."""
    t = a.tape
    m = np.asarray(m, dtype=a.value.dtype).reshape(m.shape + (1,) * (a.value.ndim - np.ndim(m)))
    out = Var(a.value * m, _needs(t, a), t)
    if out.requires_grad:
        _node(t, (out,), lambda g: _acc(a, g * m))
    return out


# ---------------------------------------------------------------- reductions

def pick(logp: Var, ids) -> Var:
    """``logp[b, ids[b]]`` for each row ``b``."""
    t = logp.tape
    ids = np.asarray(ids)
    r = np.arange(ids.shape[0])
    out = Var(logp.value[r, ids], _needs(t, logp), t)
    if out.requires_grad:
        def bw(g):
            full = np.zeros_like(logp.value)
            full[r, ids] = g
            _acc(logp, full)
        _node(t, (out,), bw)
    return out


def weighted_sum(a: Var, w=None) -> Var:
    """``sum(a * w)`` over all entries, ``w`` constant (default ones)."""
    t = a.tape
    if w is None:
        w = np.ones_like(a.value)
    else:
        w = np.asarray(w, dtype=a.value.dtype)
    out = Var(np.asarray(np.sum(a.value * w)), _needs(t, a), t)
    if out.requires_grad:
        _node(t, (out,), lambda g: _acc(a, g * w))
    return out


def log_softmax(a: Var) -> Var:
    t = a.tape
    x = a.value
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    out = Var(y, _needs(t, a), t)
    if out.requires_grad:
        def bw(g):
            _acc(a, g - np.exp(y) * g.sum(axis=-1, keepdims=True))
        _node(t, (out,), bw)
    return out


# ---------------------------------------------------------------- fused cells

def lstm_cell(pre: Var, h_prev: Var, c_prev: Var, mask=None):
    """LSTM cell without peepholes; gate order input, forget, output, candidate.

    ``pre`` is the (B, 4H) pre-activation.  Rows where ``mask`` is 0 carry the
    previous state through unchanged.
    """
    t = pre.tape
    H = h_prev.value.shape[-1]
    p = pre.value
    i = _sigmoid(p[:, :H])
    f = _sigmoid(p[:, H:2 * H])
    o = _sigmoid(p[:, 2 * H:3 * H])
    g = np.tanh(p[:, 3 * H:])
    c_new = f * c_prev.value + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=p.dtype)[:, None]
        h = m * h_new + (1.0 - m) * h_prev.value
        c = m * c_new + (1.0 - m) * c_prev.value
    else:
        m = None
        h, c = h_new, c_new
    need = _needs(t, pre, h_prev, c_prev)
    h_out = Var(h, need, t)
    c_out = Var(c, need, t)
    if need:
        def bw(gh, gc):
            if m is None:
                gh_new, gc_in = gh, gc
            else:
                gh_new, gc_in = m * gh, m * gc
            dc = gc_in + gh_new * o * (1.0 - tc * tc)
            do = gh_new * tc
            dpre = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev.value * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=-1)
            _acc(pre, dpre)
            dcp = dc * f
            if m is not None:
                dcp = dcp + (1.0 - m) * gc
                _acc(h_prev, (1.0 - m) * gh)
            _acc(c_prev, dcp)
        _node(t, (h_out, c_out), bw)
    return h_out, c_out


def attention(s_proj: Var, h_proj: Var, v: Var, h: Var, mask=None):
    """Content-based MLP attention.

    energies ``e[b,j] = v . tanh(h_proj[b,j] + s_proj[b])``, weights are the
    softmax of ``e`` over valid positions, context is the weighted sum of ``h``.
    Returns ``(context, alpha, energies)``; ``energies`` is a plain array.
    """
    t = s_proj.tape
    a = np.tanh(h_proj.value + s_proj.value[:, None, :])
    e = a @ v.value
    if mask is not None:
        e_m = np.where(mask, e, -np.inf)
    else:
        e_m = e
    e_max = e_m.max(axis=1, keepdims=True)
    w = np.exp(e_m - e_max)
    alpha = w / w.sum(axis=1, keepdims=True)
    ctx = np.einsum("bt,btd->bd", alpha, h.value)
    need = _needs(t, s_proj, h_proj, v, h)
    c_out = Var(ctx, need, t)
    a_out = Var(alpha, need, t)
    if need:
        def bw(gc, galpha):
            _acc(h, alpha[:, :, None] * gc[:, None, :])
            ga = np.einsum("btd,bd->bt", h.value, gc) + galpha
            ge = alpha * (ga - (alpha * ga).sum(axis=1, keepdims=True))
            _acc(v, np.einsum("bt,bta->a", ge, a))
            gpre = ge[:, :, None] * v.value * (1.0 - a * a)
            _acc(h_proj, gpre)
            _acc(s_proj, gpre.sum(axis=1))
        _node(t, (c_out, a_out), bw)
    return c_out, a_out, e
