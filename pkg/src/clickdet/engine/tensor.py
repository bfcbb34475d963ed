"""Reverse-mode automatic differentiation over numpy arrays.

Covers exactly the op set the point networks need: broadcasting arithmetic,
matmul, relu/sigmoid/exp/log, axis reductions (sum/mean/max with argmax
routing), row gathering with scatter-add backward, reshape/transpose/concat.
Everything is float64.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class ParamTensor:
    """A shaped float64 array with a gradient slot and a backward graph edge."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_backward_done", "name")

    def __init__(self, data, requires_grad: bool = False, _parents=(), name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = None
        self._backward_done = False
        self.name = name

    # -- graph bookkeeping -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "ParamTensor":
        return ParamTensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        if self._backward_done:
            raise RuntimeError("backward() called twice on the same graph")
        self._backward_done = True
        topo: list[ParamTensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        return self

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _lift(x) -> "ParamTensor":
        return x if isinstance(x, ParamTensor) else ParamTensor(x)

    def __add__(self, other):
        other = self._lift(other)
        out = ParamTensor(self.data + other.data, _parents=(self, other))
        if out.requires_grad:
            def bw(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = ParamTensor(-self.data, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = ParamTensor(self.data * other.data, _parents=(self, other))
        if out.requires_grad:
            def bw(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out = ParamTensor(self.data / other.data, _parents=(self, other))
        if out.requires_grad:
            def bw(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(
                        -g * self.data / (other.data ** 2), other.data.shape))
            out._backward = bw
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent: float):
        out = ParamTensor(self.data ** exponent, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(
                g * exponent * self.data ** (exponent - 1))
        return out

    def __matmul__(self, other):
        other = self._lift(other)
        out = ParamTensor(self.data @ other.data, _parents=(self, other))
        if out.requires_grad:
            def bw(g):
                if self.requires_grad:
                    ga = g @ np.swapaxes(other.data, -1, -2)
                    self._accumulate(_unbroadcast(ga, self.data.shape))
                if other.requires_grad:
                    gb = np.swapaxes(self.data, -1, -2) @ g
                    other._accumulate(_unbroadcast(gb, other.data.shape))
            out._backward = bw
        return out

    # -- elementwise nonlinearities ------------------------------------------

    def relu(self):
        out = ParamTensor(np.maximum(self.data, 0.0), _parents=(self,))
        if out.requires_grad:
            mask = self.data > 0.0
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = ParamTensor(s, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * s * (1.0 - s))
        return out

    def exp(self):
        e = np.exp(self.data)
        out = ParamTensor(e, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * e)
        return out

    def log(self):
        out = ParamTensor(np.log(self.data), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def clamp_min(self, lo: float):
        out = ParamTensor(np.maximum(self.data, lo), _parents=(self,))
        if out.requires_grad:
            mask = self.data > lo
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    def abs(self):
        out = ParamTensor(np.abs(self.data), _parents=(self,))
        if out.requires_grad:
            sign = np.sign(self.data)
            out._backward = lambda g: self._accumulate(g * sign)
        return out

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = ParamTensor(self.data.sum(axis=axis, keepdims=keepdims),
                          _parents=(self,))
        if out.requires_grad:
            def bw(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            out._backward = bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int, keepdims: bool = False):
        """Max over one axis; gradient routes to the (first) argmax element."""
        idx = np.argmax(self.data, axis=axis)
        val = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis)
        out_data = val if keepdims else np.squeeze(val, axis=axis)
        out = ParamTensor(out_data, _parents=(self,))
        if out.requires_grad:
            def bw(g):
                if not keepdims:
                    g = np.expand_dims(g, axis)
                full = np.zeros_like(self.data)
                np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
                self._accumulate(full)
            out._backward = bw
        return out

    # -- shape / indexing -------------------------------------------------------

    def reshape(self, *shape):
        out = ParamTensor(self.data.reshape(*shape), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        out = ParamTensor(self.data.transpose(*axes), _parents=(self,))
        if out.requires_grad:
            inv = np.argsort(axes) if axes else None
            out._backward = lambda g: self._accumulate(
                g.transpose(inv) if inv is not None else g.transpose())
        return out

    def gather_rows(self, indices: np.ndarray):
        """`out[i...] = self[indices[i...]]`; backward scatter-adds into rows."""
        idx = np.asarray(indices, dtype=np.intp)
        out = ParamTensor(self.data[idx], _parents=(self,))
        if out.requires_grad:
            def bw(g):
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accumulate(full)
            out._backward = bw
        return out

    def __getitem__(self, key):
        out = ParamTensor(self.data[key], _parents=(self,))
        if out.requires_grad:
            def bw(g):
                full = np.zeros_like(self.data)
                np.add.at(full, key, g)
                self._accumulate(full)
            out._backward = bw
        return out

    @staticmethod
    def concat(tensors: list["ParamTensor"], axis: int = -1) -> "ParamTensor":
        out = ParamTensor(np.concatenate([t.data for t in tensors], axis=axis),
                          _parents=tuple(tensors))
        if out.requires_grad:
            sizes = [t.data.shape[axis] for t in tensors]
            splits = np.cumsum(sizes)[:-1]
            def bw(g):
                for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                    if t.requires_grad:
                        t._accumulate(piece)
            out._backward = bw
        return out

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"ParamTensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def log_softmax(logits: ParamTensor, axis: int = -1) -> ParamTensor:
    """Numerically stable log-softmax (the max shift is treated as constant)."""
    shift = ParamTensor(logits.data.max(axis=axis, keepdims=True))
    shifted = logits - shift
    lse = shifted.exp().sum(axis=axis, keepdims=True).log()
    return shifted - lse


def parameter(rng: np.random.Generator, shape: tuple[int, ...],
              scale: float | None = None, name: str = "") -> ParamTensor:
    """He-style initialized trainable tensor."""
    fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
    scale = scale if scale is not None else np.sqrt(2.0 / fan_in)
    return ParamTensor(rng.normal(0.0, scale, size=shape),
                       requires_grad=True, name=name)
