"""Minimal dense-tensor reverse-mode autodiff over float64 numpy arrays.

Only the operations the value networks need are provided: affine maps,
concatenation, gather/segment reductions (sum, max, log-sum-exp), Mish,
absolute value, hinge, and elementwise arithmetic.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        # iterative topological order over the op graph
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.grad = _accum(self.grad, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data):
    return Tensor(data)


def parameter(data):
    return Tensor(data, requires_grad=True)


def _accum(current, grad):
    return grad.copy() if current is None else current + grad


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents) if req else (),
                  _backward=backward if req else None)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = _make(a.data + b.data, (a, b), None)

    def bw(grad):
        if a.requires_grad:
            a.grad = _accum(a.grad, _unbroadcast(grad, a.shape))
        if b.requires_grad:
            b.grad = _accum(b.grad, _unbroadcast(grad, b.shape))

    out._backward = bw
    return out


def sub(a, b):
    return add(a, scale(_as_tensor(b), -1.0))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = _make(a.data * b.data, (a, b), None)

    def bw(grad):
        if a.requires_grad:
            a.grad = _accum(a.grad, _unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b.grad = _accum(b.grad, _unbroadcast(grad * a.data, b.shape))

    out._backward = bw
    return out


def scale(a, c):
    a = _as_tensor(a)
    out = _make(a.data * c, (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, grad * c)

    out._backward = bw
    return out


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = _make(a.data @ b.data, (a, b), None)

    def bw(grad):
        if a.requires_grad:
            a.grad = _accum(a.grad, grad @ b.data.T)
        if b.requires_grad:
            b.grad = _accum(b.grad, a.data.T @ grad)

    out._backward = bw
    return out


def concat_cols(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    widths = [t.shape[1] for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=1), tensors, None)

    def bw(grad):
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t.grad = _accum(t.grad, grad[:, offset : offset + w])
            offset += w

    out._backward = bw
    return out


def concat_rows(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    heights = [t.shape[0] for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=0), tensors, None)

    def bw(grad):
        offset = 0
        for t, h in zip(tensors, heights):
            if t.requires_grad:
                t.grad = _accum(t.grad, grad[offset : offset + h])
            offset += h

    out._backward = bw
    return out


def slice_cols(a, start, stop):
    a = _as_tensor(a)
    out = _make(a.data[:, start:stop], (a,), None)

    def bw(grad):
        full = np.zeros_like(a.data)
        full[:, start:stop] = grad
        a.grad = _accum(a.grad, full)

    out._backward = bw
    return out


def gather_rows(a, indices):
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = _make(a.data[idx], (a,), None)

    def bw(grad):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, grad)
        a.grad = _accum(a.grad, full)

    out._backward = bw
    return out


def segment_sum(a, segments, num_segments):
    """Row-wise scatter-add: out[s] = sum of rows with segment id s."""
    a = _as_tensor(a)
    seg = np.asarray(segments, dtype=np.intp)
    data = np.zeros((num_segments, a.shape[1]))
    np.add.at(data, seg, a.data)
    out = _make(data, (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, grad[seg])

    out._backward = bw
    return out


def segment_max(a, segments, num_segments, empty_value=0.0):
    """Dimension-wise max per segment; empty segments get empty_value and pass
    no gradient.  Ties route the gradient to the first maximal row."""
    a = _as_tensor(a)
    seg = np.asarray(segments, dtype=np.intp)
    data = np.full((num_segments, a.shape[1]), -np.inf)
    np.maximum.at(data, seg, a.data)
    empty = ~np.isin(np.arange(num_segments), seg)
    data[empty] = empty_value
    # first argmax row per (segment, column)
    winner = np.full((num_segments, a.shape[1]), -1, dtype=np.intp)
    for row_idx in range(a.data.shape[0] - 1, -1, -1):
        s = seg[row_idx]
        hit = a.data[row_idx] == data[s]
        winner[s, hit] = row_idx
    out = _make(data, (a,), None)

    def bw(grad):
        full = np.zeros_like(a.data)
        rows, cols = np.nonzero(winner >= 0)
        full[winner[rows, cols], cols] += grad[rows, cols]
        a.grad = _accum(a.grad, full)

    out._backward = bw
    return out


def segment_logsumexp(a, segments, num_segments, empty_value=0.0):
    """Dimension-wise smooth maximum log sum exp per segment, max-shifted for
    stability.  Empty segments get empty_value and pass no gradient."""
    a = _as_tensor(a)
    seg = np.asarray(segments, dtype=np.intp)
    mx = np.full((num_segments, a.shape[1]), -np.inf)
    np.maximum.at(mx, seg, a.data)
    present = np.isin(np.arange(num_segments), seg)
    safe_mx = np.where(present[:, None], mx, 0.0)
    shifted = np.exp(a.data - safe_mx[seg])
    denom = np.zeros((num_segments, a.shape[1]))
    np.add.at(denom, seg, shifted)
    data = np.where(present[:, None], safe_mx + np.log(np.maximum(denom, 1e-300)), empty_value)
    softmax = shifted / np.maximum(denom[seg], 1e-300)
    out = _make(data, (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, grad[seg] * softmax)

    out._backward = bw
    return out


def sum_rows(a):
    """Column-wise sum over all rows, keeping a (1, k) shape."""
    a = _as_tensor(a)
    out = _make(a.data.sum(axis=0, keepdims=True), (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, np.broadcast_to(grad, a.shape).copy())

    out._backward = bw
    return out


def sum_all(a):
    a = _as_tensor(a)
    out = _make(np.array(a.data.sum()), (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, np.broadcast_to(grad, a.shape).copy())

    out._backward = bw
    return out


def abs_(a):
    a = _as_tensor(a)
    out = _make(np.abs(a.data), (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, grad * np.sign(a.data))

    out._backward = bw
    return out


def relu(a):
    """max{0, x}; subgradient 0 at the kink."""
    a = _as_tensor(a)
    out = _make(np.maximum(a.data, 0.0), (a,), None)

    def bw(grad):
        a.grad = _accum(a.grad, grad * (a.data > 0.0))

    out._backward = bw
    return out


def mish(a):
    a = _as_tensor(a)
    sp = np.logaddexp(0.0, a.data)  # softplus
    t = np.tanh(sp)
    out = _make(a.data * t, (a,), None)

    def bw(grad):
        sig = 1.0 / (1.0 + np.exp(-a.data))
        deriv = t + a.data * (1.0 - t * t) * sig
        a.grad = _accum(a.grad, grad * deriv)

    out._backward = bw
    return out
