"""Dense float64 tensors with a per-call reverse-mode tape.

A :class:`Tape` records every operation applied to tensors that belong to it,
in execution order. ``Tape.backward`` walks that list in reverse and returns
gradients for the parameter leaves only. Tapes are cheap and are rebuilt for
every forward pass, so documents of any shape can flow through the same code.

Tensors created without a tape (``Tensor(array)``) behave as constants and
operations on them are not recorded, which is how eval-mode inference runs.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class PreconditionError(ValueError):
    """An operation was called outside its domain."""


class NumericError(ArithmeticError):
    """Non-finite input where a finite one is required."""


class Tensor:
    __slots__ = ("data", "tape", "parents", "grad_fn", "op", "id")

    def __init__(self, data, tape: "Tape | None" = None, parents=(), grad_fn=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.parents: tuple[Tensor, ...] = tuple(parents)
        self.grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = grad_fn
        self.op = op
        self.id = -1
        if tape is not None:
            tape._register(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of operations; one per forward pass, one worker."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.params: dict[str, Tensor] = {}

    def _register(self, t: Tensor) -> None:
        t.id = len(self.nodes)
        self.nodes.append(t)

    def param(self, name: str, array) -> Tensor:
        if name in self.params:
            return self.params[name]
        t = Tensor(array, tape=self, op=f"param:{name}")
        self.params[name] = t
        return t

    def const(self, array) -> Tensor:
        return Tensor(array, tape=self, op="const")

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradients of scalar ``loss`` for every parameter on this tape."""
        if loss.data.size != 1:
            raise PreconditionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise PreconditionError("loss tensor was not recorded on this tape")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads.get(node.id)
            if g is None or node.grad_fn is None:
                continue
            for parent, pg in zip(node.parents, node.grad_fn(g)):
                if pg is None or parent.tape is not self:
                    continue
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg
        out = {}
        for name, p in self.params.items():
            g = grads.get(p.id)
            out[name] = np.zeros_like(p.data) if g is None else g.reshape(p.shape)
        return out


def _tape_of(*ts) -> "Tape | None":
    for t in ts:
        if isinstance(t, Tensor) and t.tape is not None:
            return t.tape
    return None


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, grad_fn, op) -> Tensor:
    tape = _tape_of(*parents)
    if tape is None:
        return Tensor(data, op=op)
    return Tensor(data, tape=tape, parents=parents, grad_fn=grad_fn, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def relu(x) -> Tensor:
    x = _wrap(x)
    # subgradient at exactly 0 is 0
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def tanh(x) -> Tensor:
    x = _wrap(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def total(x) -> Tensor:
    x = _wrap(x)
    return _node(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x) -> Tensor:
    x = _wrap(x)
    n = x.data.size
    return _node(np.mean(x.data), (x,), lambda g: (np.full(x.shape, g / n),), "mean")


def column(x, j: int) -> Tensor:
    """``x[..., j]`` of the last axis."""
    x = _wrap(x)

    def grad_fn(g):
        out = np.zeros_like(x.data)
        out[..., j] = g
        return (out,)

    return _node(x.data[..., j], (x,), grad_fn, "column")


def expand_last(x) -> Tensor:
    x = _wrap(x)
    return _node(x.data[..., None], (x,), lambda g: (g[..., 0],), "expand_last")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [_wrap(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(xs)))

    return _node(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), grad_fn, "concat")


def gate_max(a, b) -> Tensor:
    """Elementwise max of two tensors; gradient goes to ``a`` on ties."""
    a, b = _wrap(a), _wrap(b)
    pick_a = a.data >= b.data
    return _node(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (g * pick_a, g * ~pick_a), "gate_max")


# --- linear algebra --------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 1 or b.data.ndim < 1 or a.shape[-1] != b.shape[0 if b.data.ndim == 1 else -2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    if b.data.ndim != 2:
        raise ShapeError(f"matmul right operand must be 2-D, got {b.shape}")

    def grad_fn(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _node(a.data @ b.data, (a, b), grad_fn, "matmul")


# --- convolution and pooling ----------------------------------------------

def conv_bank(x, w, b) -> Tensor:
    """Valid 1-D convolution of a batch ``x[S, L, d]`` with ``w[M, h, d]``.

    Returns feature maps ``[S, L - h + 1, M]``; window ``j`` covers rows
    ``j .. j + h - 1``.
    """
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    S, L, d = x.shape
    M, h, dw = w.shape
    if dw != d:
        raise ShapeError(f"filter width {dw} does not match embedding width {d}")
    if h > L:
        raise PreconditionError(f"filter height {h} exceeds sequence length {L}; pad upstream")
    T = L - h + 1
    # [S, T, d, h] -> [S, T, h, d]
    win = sliding_window_view(x.data, h, axis=1).transpose(0, 1, 3, 2).reshape(S, T, h * d)
    wf = w.data.reshape(M, h * d)
    out = win @ wf.T + b.data

    def grad_fn(g):
        g2 = g.reshape(S * T, M)
        gw = (g2.T @ win.reshape(S * T, h * d)).reshape(M, h, d)
        gb = g2.sum(axis=0)
        gwin = (g2 @ wf).reshape(S, T, h, d)
        gx = np.zeros_like(x.data)
        for k in range(h):
            gx[:, k:k + T, :] += gwin[:, :, k, :]
        return gx, gw, gb

    return _node(out, (x, w, b), grad_fn, "conv_bank")


def conv1d_valid(instance, filt, bias: float = 0.0) -> Tensor:
    """Feature map of one ``h x d`` filter slid over an ``n x d`` instance."""
    instance, filt = _wrap(instance), _wrap(filt)
    if instance.data.ndim != 2 or filt.data.ndim != 2:
        raise ShapeError(f"conv1d_valid expects 2-D operands, got {instance.shape} and {filt.shape}")
    x3 = reshape(instance, (1,) + instance.shape)
    w3 = reshape(filt, (1,) + filt.shape)
    b1 = reshape(_wrap(bias), (1,))
    return reshape(conv_bank(x3, w3, b1), (instance.shape[0] - filt.shape[0] + 1,))


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def masked_max_pool(x, valid: np.ndarray) -> Tensor:
    """1-max pooling over axis 1 of ``x[S, T, M]`` using the first ``valid[s]`` rows.

    Ties go to the lowest index. Gradient routes only to the argmax.
    """
    x = _wrap(x)
    S, T, M = x.shape
    valid = np.asarray(valid)
    if np.any(valid < 1) or np.any(valid > T):
        raise PreconditionError("each sequence needs between 1 and T valid positions")
    masked = np.where(np.arange(T)[None, :, None] < valid[:, None, None], x.data, -np.inf)
    arg = masked.argmax(axis=1)
    si, mi = np.meshgrid(np.arange(S), np.arange(M), indexing="ij")
    out = x.data[si, arg, mi]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[si, arg, mi] = g
        return (gx,)

    return _node(out, (x,), grad_fn, "max_pool")


def max_pool_1(f) -> tuple[Tensor, int]:
    """Maximum of a 1-D feature map and its (first) index."""
    f = _wrap(f)
    if f.data.ndim != 1 or f.data.size == 0:
        raise PreconditionError("max_pool_1 needs a non-empty 1-D feature map")
    L = f.shape[0]
    pooled = masked_max_pool(reshape(f, (1, L, 1)), np.array([L]))
    return reshape(pooled, ()), int(np.argmax(f.data))


# --- lookup and segment reductions ----------------------------------------

def embed(E, ids: np.ndarray) -> Tensor:
    """Gather rows of ``E`` for an integer array of token ids."""
    E = _wrap(E)
    ids = np.asarray(ids, dtype=np.int64)

    def grad_fn(g):
        gE = np.zeros_like(E.data)
        np.add.at(gE, ids.reshape(-1), g.reshape(-1, E.shape[1]))
        return (gE,)

    return _node(E.data[ids], (E,), grad_fn, "embed")


def segment_sum(x, segments: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``x[S, ...]`` into ``n_segments`` buckets."""
    x = _wrap(x)
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((n_segments,) + x.shape[1:])
    np.add.at(out, segments, x.data)
    return _node(out, (x,), lambda g: (g[segments],), "segment_sum")


def segment_softmax(scores, segments: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment."""
    scores = _wrap(scores)
    segments = np.asarray(segments, dtype=np.int64)
    if not np.all(np.isfinite(scores.data)):
        raise NumericError("segment_softmax received non-finite scores")
    peak = np.full(n_segments, -np.inf)
    np.maximum.at(peak, segments, scores.data)
    e = np.exp(scores.data - peak[segments])
    z = np.zeros(n_segments)
    np.add.at(z, segments, e)
    p = e / z[segments]

    def grad_fn(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, segments, g * p)
        return (p * (g - dot[segments]),)

    return _node(p, (scores,), grad_fn, "segment_softmax")


# --- classification --------------------------------------------------------

def softmax(logits) -> Tensor:
    """Softmax over the last axis, computed after max subtraction."""
    logits = _wrap(logits)
    if logits.shape[-1] < 2:
        raise PreconditionError("softmax needs at least two classes")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("softmax received non-finite logits")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _node(p, (logits,), grad_fn, "softmax")


def cross_entropy(probs, labels) -> Tensor:
    """Mean of ``-log(max(probs[i, label_i], 1e-12))`` over rows.

    A 1-D ``probs`` with a scalar label gives the single-example loss.
    """
    probs = _wrap(probs)
    single = probs.data.ndim == 1
    P = probs.data[None, :] if single else probs.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    K = P.shape[1]
    if labels.shape[0] != P.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {P.shape[0]} rows")
    if np.any(labels < 0) or np.any(labels >= K):
        raise IndexError(f"label out of range [0, {K}): {labels.tolist()}")
    rows = np.arange(P.shape[0])
    picked = P[rows, labels]
    floored = np.maximum(picked, PROB_FLOOR)
    n = P.shape[0]
    loss = -np.log(floored).mean()

    def grad_fn(g):
        gp = np.zeros_like(P)
        gp[rows, labels] = np.where(picked > PROB_FLOOR, -1.0 / floored, 0.0) * (g / n)
        return (gp[0] if single else gp,)

    return _node(loss, (probs,), grad_fn, "cross_entropy")


def dropout(x, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` in train mode."""
    if not 0.0 <= rate <= 0.9:
        raise ValueError(f"dropout rate must lie in [0, 0.9], got {rate}")
    x = _wrap(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")
