"""Dense float64 tensors with reverse-mode automatic differentiation.

The operation set is exactly what the prediction model needs: linear maps,
elementwise nonlinearities, normalization, masked softmax, reductions,
indexing and concatenation. Everything runs on numpy arrays; gradients are
accumulated by summation over fan-out.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

logger = logging.getLogger(__name__)

_ids = itertools.count()

# When set (by eval_forward / trace()), every tensor created by an op is
# appended here so the whole evaluation can be checked for finiteness.
_TRACE: list["Tensor"] | None = None


class trace:
    """Context manager collecting every tensor created inside it."""

    def __enter__(self):
        global _TRACE
        self._prev = _TRACE
        _TRACE = []
        return _TRACE

    def __exit__(self, *exc):
        global _TRACE
        _TRACE = self._prev
        return False


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node in the computation tape.

    data    : float64 ndarray
    grad    : accumulated gradient (None until backward reaches the node)
    _parents: input tensors
    _vjp    : callable(grad_out) -> tuple of parent gradients (or None slots)
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "id", "op", "name")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None, op="leaf", name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp
        self.id = next(_ids)
        self.op = op
        self.name = name
        if _TRACE is not None:
            _TRACE.append(self)

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    # -- autodiff -----------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar node; fan-out accumulates by sum."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if node.id in visited or not node.requires_grad:
                continue
            visited.add(node.id)
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and p.id not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # method aliases used heavily downstream
    def reshape(self, *shape):
        return reshape(self, *shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return max_(self, axis, keepdims)


def tensor(data, requires_grad=False, name=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, op="param", name=name)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(data, parents, vjp, op) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents, vjp=vjp if req else None, op=op)


# -- arithmetic ---------------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp, "add")


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), vjp, "mul")


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), vjp, "div")


def power(a, p: float):
    a = _wrap(a)
    out = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1),)

    return _node(out, (a,), vjp, f"pow{p}")


def matmul(a, b):
    """Batched matrix product; leading batch dims broadcast like numpy."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2")
    out = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _node(out, (a, b), vjp, "matmul")


# -- elementwise functions ----------------------------------------------------


def exp(a):
    a = _wrap(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _node(out, (a,), vjp, "exp")


def log(a):
    a = _wrap(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _node(out, (a,), vjp, "log")


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), vjp, "tanh")


def sigmoid(a):
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), vjp, "sigmoid")


def relu(a):
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return _node(out, (a,), vjp, "relu")


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact (erf-based) GELU; smooth, so finite-difference checks stay clean."""
    a = _wrap(a)
    phi = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = a.data * phi

    def vjp(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (phi + a.data * pdf),)

    return _node(out, (a,), vjp, "gelu")


def clip(a, lo: float, hi: float):
    """Hard clamp; gradient is passed through strictly inside the bounds."""
    a = _wrap(a)
    out = np.clip(a.data, lo, hi)

    def vjp(g):
        return (g * ((a.data > lo) & (a.data < hi)),)

    return _node(out, (a,), vjp, "clip")


# -- shape ops ----------------------------------------------------------------


def reshape(a, *shape):
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(out, (a,), vjp, "reshape")


def swapaxes(a, ax1: int, ax2: int):
    a = _wrap(a)
    out = a.data.swapaxes(ax1, ax2)

    def vjp(g):
        return (g.swapaxes(ax1, ax2),)

    return _node(out, (a,), vjp, "swapaxes")


def getitem(a, idx):
    """Basic and integer-array indexing; backward scatter-adds."""
    a = _wrap(a)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(out, (a,), vjp, "getitem")


def take_along(a, indices: np.ndarray, axis: int):
    """Differentiable np.take_along_axis; indices are plain integer arrays."""
    a = _wrap(a)
    idx = np.asarray(indices)
    out = np.take_along_axis(a.data, idx, axis=axis)

    def vjp(g):
        ga = np.zeros_like(a.data)
        mesh = list(np.indices(idx.shape))
        mesh[axis] = idx
        np.add.at(ga, tuple(mesh), g)
        return (ga,)

    return _node(out, (a,), vjp, "take_along")


def concat(parts, axis: int = 0):
    parts = [_wrap(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(parts), vjp, "concat")


# -- reductions ---------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    axes = _norm_axis(axis, a.data.ndim)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape),)

    return _node(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    axes = _norm_axis(axis, a.data.ndim)
    n = int(np.prod([a.data.shape[ax] for ax in axes]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape) / n,)

    return _node(out, (a,), vjp, "mean")


def max_(a, axis=None, keepdims=False):
    """Max reduction; the gradient flows to the first argmax per slice."""
    a = _wrap(a)
    if axis is None:
        axis = tuple(range(a.data.ndim))
    if isinstance(axis, tuple):
        if len(axis) != 1:
            raise ValueError("max_ supports a single reduction axis")
        axis = axis[0]
    axis = axis % a.data.ndim
    out = a.data.max(axis=axis, keepdims=keepdims)
    arg = np.argmax(a.data, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(arg, axis), g, axis=axis)
        return (ga,)

    return _node(out, (a,), vjp, "max")


# -- softmax / normalization ---------------------------------------------------


def masked_softmax(x, mask=None, axis: int = -1):
    """Softmax over `axis`; entries where mask is False get exactly zero weight.

    Rows with no unmasked entry produce all-zero output (the caller decides
    whether that situation deserves a log line).
    """
    x = _wrap(x)
    if mask is None:
        e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
        y = e / e.sum(axis=axis, keepdims=True)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), x.data.shape)
        neg = np.where(m, x.data, -np.inf)
        hi = neg.max(axis=axis, keepdims=True)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        e = np.exp(neg - hi)
        denom = e.sum(axis=axis, keepdims=True)
        y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _node(y, (x,), vjp, "masked_softmax")


def softmax(x, axis: int = -1):
    return masked_softmax(x, None, axis)


def log_softmax(x, axis: int = -1):
    x = _wrap(x)
    hi = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - hi
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    y = np.exp(out)

    def vjp(g):
        return (g - y * g.sum(axis=axis, keepdims=True),)

    return _node(out, (x,), vjp, "log_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def vjp(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        red = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=red)
        dbias = g.sum(axis=red)
        return dx, dgain, dbias

    return _node(out, (x, gain, bias), vjp, "layer_norm")


# -- graph container, evaluation, gradient checking ----------------------------


class GraphError(ValueError):
    pass


@dataclass
class Graph:
    """A reusable computation: named parameters plus a build function.

    `build` maps a dict of input tensors to a dict of output tensors; calling
    it re-records the tape, so the node set is in topological (creation)
    order for every evaluation.
    """

    params: dict[str, Tensor]
    build: Callable[[dict[str, Tensor]], dict[str, Tensor]]
    input_specs: dict[str, tuple] = field(default_factory=dict)
    input_sampler: Callable[[np.random.Generator], dict[str, np.ndarray]] | None = None


def _check_inputs(graph: Graph, inputs: dict) -> dict[str, Tensor]:
    wrapped = {}
    for name, spec in graph.input_specs.items():
        if name not in inputs:
            raise GraphError(f"missing graph input '{name}'")
        arr = _as_array(inputs[name])
        if spec is not None and tuple(arr.shape) != tuple(spec):
            raise GraphError(f"input '{name}' has shape {arr.shape}, expected {tuple(spec)}")
    for name, value in inputs.items():
        wrapped[name] = value if isinstance(value, Tensor) else Tensor(value, name=name)
    return wrapped


def eval_forward(graph: Graph, inputs: dict | None = None) -> dict[str, np.ndarray]:
    """Evaluate the graph; parameters are read-only, outputs are plain arrays.

    Every intermediate node is checked for finiteness; the first offending
    node is reported by id and op name.
    """
    inputs = inputs or {}
    wrapped = _check_inputs(graph, inputs)
    with trace() as nodes:
        outputs = graph.build(wrapped)
    for node in nodes:
        if not np.all(np.isfinite(node.data)):
            raise GraphError(f"non-finite values at node id={node.id} op={node.op}")
    return {k: np.array(v.data, copy=True) for k, v in outputs.items()}


def eval_backward(graph: Graph, inputs: dict | None = None, output: str = "loss") -> dict[str, np.ndarray]:
    """Gradients of a scalar output w.r.t. every parameter.

    Parameters not reachable from the output get zero gradients.
    """
    inputs = inputs or {}
    wrapped = _check_inputs(graph, inputs)
    for p in graph.params.values():
        p.grad = None
    outputs = graph.build(wrapped)
    if output not in outputs:
        raise GraphError(f"graph has no output named '{output}'")
    node = outputs[output]
    if node.data.size != 1:
        raise GraphError(f"output '{output}' is not scalar (shape {node.shape})")
    node.backward()
    return {name: (np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True))
            for name, p in graph.params.items()}


@dataclass
class GradEntry:
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        a, b = self.analytic, self.numeric
        return abs(a - b) / max(abs(a), abs(b), 1e-8)


@dataclass
class GradReport:
    entries: dict[str, GradEntry]

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries.values()), default=0.0)

    @property
    def worst_param(self) -> str | None:
        if not self.entries:
            return None
        return max(self.entries, key=lambda k: self.entries[k].rel_error)

    def __str__(self):
        return (f"GradReport(params={len(self.entries)}, "
                f"max_rel_error={self.max_rel_error:.3e}, worst={self.worst_param})")


def check_gradients(graph: Graph, seed: int, inputs: dict | None = None,
                    output: str = "loss", step: float = 1e-5) -> GradReport:
    """Compare analytic gradients against central finite differences.

    One random unit direction is drawn per parameter tensor (seeded); the
    analytic directional derivative <grad, v> is compared to the symmetric
    difference quotient of the scalar output along v.
    """
    if not graph.params:
        raise GraphError("graph has no parameters to check")
    rng = np.random.default_rng(seed)
    if inputs is None:
        inputs = graph.input_sampler(rng) if graph.input_sampler else {}

    grads = eval_backward(graph, inputs, output)

    def scalar() -> float:
        wrapped = _check_inputs(graph, inputs)
        return float(graph.build(wrapped)[output].data)

    entries = {}
    for name, p in graph.params.items():
        v = rng.standard_normal(p.data.shape)
        norm = np.linalg.norm(v)
        if norm > 0:
            v = v / norm
        analytic = float(np.sum(grads[name] * v))
        saved = p.data.copy()
        p.data = saved + step * v
        f_plus = scalar()
        p.data = saved - step * v
        f_minus = scalar()
        p.data = saved
        numeric = (f_plus - f_minus) / (2.0 * step)
        entries[name] = GradEntry(analytic=analytic, numeric=numeric)
    return GradReport(entries=entries)
