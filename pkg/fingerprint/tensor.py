"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds its result eagerly and remembers how to push a
gradient back to its inputs. ``backward`` walks the graph traced from a
scalar loss in reverse topological order.
"""
import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, ShapeError

_node_ids = itertools.count()
_recording = threading.local()


def _grad_enabled():
    return getattr(_recording, 'enabled', True)


@contextmanager
def inference_mode():
    """Run operations without recording a differentiation graph."""
    previous = _grad_enabled()
    _recording.enabled = False
    try:
        yield
    finally:
        _recording.enabled = previous


def _check_finite(values, what):
    if not np.isfinite(values).all():
        raise NumericError(f"{what} produced non-finite values")


class Tensor:
    """n-dimensional real array participating in a differentiation graph."""

    def __init__(self, values, requires_grad=False):
        values = np.array(values, dtype=np.float64)
        if any(extent < 1 for extent in values.shape):
            raise ShapeError(f"tensor extents must be positive, got {values.shape}")
        _check_finite(values, 'tensor construction')
        self.values = values
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self.op = None
        self.inputs = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values.reshape(()))

    def numpy(self):
        return self.values

    def detach(self):
        return Tensor(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op, values, inputs, backward_fn):
    _check_finite(values, op)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.node_id = next(_node_ids)
    out.requires_grad = _grad_enabled() and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        out.op = op
        out.inputs = tuple(inputs)
        out._backward = backward_fn
    else:
        out.op = None
        out.inputs = ()
        out._backward = None
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result('add', a.values + b.values, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'sub')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result('sub', a.values - b.values, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'mul')

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _result('mul', a.values * b.values, (a, b), backward)


def scale(x, factor):
    x = as_tensor(x)
    factor = float(factor)

    def backward(g):
        return (g * factor,)

    return _result('scale', x.values * factor, (x,), backward)


def power(x, exponent):
    x = as_tensor(x)
    exponent = float(exponent)
    if exponent < 1 and (x.values <= 0).any():
        raise NumericError(f"power {exponent} requires positive inputs")
    out = x.values ** exponent

    def backward(g):
        return (g * exponent * x.values ** (exponent - 1.0),)

    return _result('power', out, (x,), backward)


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.values)

    def backward(g):
        return (g * out,)

    return _result('exp', out, (x,), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.values > 0

    def backward(g):
        return (g * mask,)

    return _result('relu', np.where(mask, x.values, 0.0), (x,), backward)


# reductions


def _normalize_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(a % ndim for a in axes)


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _normalize_axis(axis, x.ndim)
    out = x.values.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result('sum', np.asarray(out, dtype=np.float64), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.values.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _result('mean', np.asarray(out, dtype=np.float64), (x,), backward)


# linear algebra and layout


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = np.matmul(a.values, b.values)
    except ValueError:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result('matmul', out, (a, b), backward)


def transpose(x):
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 axes, got {x.shape}")

    def backward(g):
        return (np.swapaxes(g, -1, -2),)

    return _result('transpose', np.swapaxes(x.values, -1, -2).copy(), (x,), backward)


def permute(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _result('permute', np.transpose(x.values, axes).copy(), (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _result('reshape', out.copy(), (x,), backward)


def index(x, key):
    """Basic or integer-array indexing; gradients scatter back with accumulation."""
    x = as_tensor(x)
    try:
        out = np.array(x.values[key], dtype=np.float64)
    except IndexError as exc:
        raise ShapeError(f"index into {x.shape}: {exc}") from None

    parts = key if isinstance(key, tuple) else (key,)
    scattered = any(isinstance(k, (list, np.ndarray)) for k in parts)

    def backward(g):
        full = np.zeros_like(x.values)
        if scattered:
            np.add.at(full, key, g)
        else:
            full[key] += g
        return (full,)

    return _result('index', out, (x,), backward)


def pad_rows(x, before, after):
    """Zero-pad the second-to-last (time) axis."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"pad_rows needs at least 2 axes, got {x.shape}")
    widths = [(0, 0)] * x.ndim
    widths[-2] = (before, after)
    rows = x.shape[-2]

    def backward(g):
        return (g[..., before:before + rows, :],)

    return _result('pad_rows', np.pad(x.values, widths), (x,), backward)


def concat_lastdim(tensors):
    tensors = [as_tensor(t) for t in tensors]
    leading = {t.shape[:-1] for t in tensors}
    if len(leading) != 1:
        raise ShapeError(f"concat_lastdim: leading shapes differ {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[-1] for t in tensors])

    def backward(g):
        return tuple(g[..., lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    out = np.concatenate([t.values for t in tensors], axis=-1)
    return _result('concat', out, tensors, backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ShapeError(f"stack: shapes differ {[t.shape for t in tensors]}")

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    out = np.stack([t.values for t in tensors], axis=axis)
    return _result('stack', out, tensors, backward)


# normalised exponentials


def softmax_lastdim(x):
    x = as_tensor(x)
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result('softmax', out, (x,), backward)


def log_softmax_lastdim(x):
    x = as_tensor(x)
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _result('log_softmax', out, (x,), backward)


# graph and backward pass


@dataclass(frozen=True)
class OpRecord:
    kind: str
    inputs: tuple
    output: int


class Graph:
    """Operation records in topological order: inputs always precede consumers."""

    def __init__(self, nodes):
        self.nodes = nodes
        self.records = [
            OpRecord(node.op, tuple(t.node_id for t in node.inputs), node.node_id)
            for node in nodes if node.op is not None
        ]

    @classmethod
    def trace(cls, output):
        order, seen = [], set()
        stack_ = [(output, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack_.append((node, True))
            for parent in reversed(node.inputs):
                if parent.node_id not in seen:
                    stack_.append((parent, False))
        return cls(order)

    def leaves(self):
        return [node for node in self.nodes if node.op is None and node.requires_grad]

    def __len__(self):
        return len(self.records)


def backward(loss, graph=None):
    """Populate ``grad`` on every graph node reachable from the scalar ``loss``."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if graph is None:
        graph = Graph.trace(loss)
    grads = {loss.node_id: np.ones_like(loss.values)}
    for node in reversed(graph.nodes):
        g = grads.get(node.node_id)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g
        if node._backward is None:
            continue
        for parent, pg in zip(node.inputs, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            _check_finite(pg, f"gradient of {node.op}")
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg
    return graph


def gradient_check(fn, inputs, step=1e-5):
    """
    Largest relative error between analytic and central-difference gradients.

    ``fn`` maps the list of ``inputs`` to a scalar Tensor.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    backward(fn(inputs))
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.values)
        numeric = np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            with inference_mode():
                up = fn(inputs).item()
            flat[i] = original - step
            with inference_mode():
                down = fn(inputs).item()
            flat[i] = original
            numeric.reshape(-1)[i] = (up - down) / (2 * step)
        scale_ = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
        worst = max(worst, float((np.abs(analytic - numeric) / scale_).max()))
    return worst
