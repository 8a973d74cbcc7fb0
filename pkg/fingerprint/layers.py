"""
Differentiable building blocks of the attention encoder.

Every function takes activations shaped ``[..., T, C]``: an optional
leading batch axis followed by time steps and features.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .exceptions import ShapeError
from .tensor import Tensor


def _require_shape(t, shape, name):
    if tuple(t.shape) != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {t.shape}")


@dataclass
class Conv1dParams:
    kernel: Tensor  # [out, in, width]
    bias: Tensor    # [out]
    stride: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 3:
            raise ShapeError(f"conv kernel must be [out, in, width], got {self.kernel.shape}")
        _require_shape(self.bias, (self.kernel.shape[0],), 'conv bias')
        if self.stride != 1:
            raise ShapeError("only stride 1 is supported")

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    @property
    def width(self):
        return self.kernel.shape[2]

    @property
    def padding(self):
        """Left padding of the 'same' scheme; the right side gets ``width - 1 - padding``."""
        return (self.width - 1) // 2

    def named_tensors(self):
        yield 'kernel', self.kernel
        yield 'bias', self.bias


@dataclass
class PositionalEmbeddingTable:
    table: Tensor  # [max_length, model_dim]

    def __post_init__(self):
        if self.table.ndim != 2:
            raise ShapeError(f"positional table must be 2-D, got {self.table.shape}")

    @property
    def max_length(self):
        return self.table.shape[0]

    def named_tensors(self):
        yield 'table', self.table


@dataclass
class MultiHeadParams:
    query: list   # per head [model_dim, d_k]
    key: list
    value: list
    output: Tensor  # [heads * d_k, model_dim]

    def __post_init__(self):
        heads = len(self.query)
        if heads < 1 or len(self.key) != heads or len(self.value) != heads:
            raise ShapeError("query, key and value need one projection per head")
        model_dim, d_k = self.query[0].shape
        for projection in (*self.query, *self.key, *self.value):
            _require_shape(projection, (model_dim, d_k), 'head projection')
        _require_shape(self.output, (heads * d_k, model_dim), 'output projection')

    @property
    def heads(self):
        return len(self.query)

    @property
    def d_k(self):
        return self.query[0].shape[1]

    def named_tensors(self):
        for i in range(self.heads):
            yield f'heads.{i}.query', self.query[i]
            yield f'heads.{i}.key', self.key[i]
            yield f'heads.{i}.value', self.value[i]
        yield 'output', self.output


@dataclass
class LayerNormParams:
    gain: Tensor
    shift: Tensor
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ShapeError(f"layer norm epsilon must be positive, got {self.epsilon}")
        _require_shape(self.shift, self.gain.shape, 'layer norm shift')

    def named_tensors(self):
        yield 'gain', self.gain
        yield 'shift', self.shift


@dataclass
class DenseParams:
    weight: Tensor  # [in, out]
    bias: Tensor    # [out]

    def __post_init__(self):
        if self.weight.ndim != 2:
            raise ShapeError(f"dense weight must be [in, out], got {self.weight.shape}")
        _require_shape(self.bias, (self.weight.shape[1],), 'dense bias')

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def named_tensors(self):
        yield 'weight', self.weight
        yield 'bias', self.bias


def conv1d(x, p):
    """'Same'-padded cross-correlation along time: [..., T, C_in] -> [..., T, C_out]."""
    x = tn.as_tensor(x)
    if x.shape[-1] != p.in_channels:
        raise ShapeError(f"conv1d: input has {x.shape[-1]} channels, kernel expects {p.in_channels}")
    steps = x.shape[-2]
    padded = tn.pad_rows(x, p.padding, p.width - 1 - p.padding)
    # im2col: row t holds taps t..t+width-1, tap-major
    columns = tn.concat_lastdim([
        tn.index(padded, (Ellipsis, slice(j, j + steps), slice(None))) for j in range(p.width)
    ])
    weight = tn.reshape(tn.permute(p.kernel, (2, 1, 0)), (p.width * p.in_channels, p.out_channels))
    return tn.add(tn.matmul(columns, weight), p.bias)


def attention_weights(q, k):
    """softmax(q kᵀ / sqrt(d_k)) over the key axis."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: query width {q.shape[-1]} != key width {k.shape[-1]}")
    scores = tn.scale(tn.matmul(q, tn.transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    return tn.softmax_lastdim(scores)


def attention(q, k, v):
    q, k, v = tn.as_tensor(q), tn.as_tensor(k), tn.as_tensor(v)
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: {k.shape[-2]} keys but {v.shape[-2]} values")
    return tn.matmul(attention_weights(q, k), v)


def _swap_time_and_heads(x):
    n = x.ndim
    return tn.permute(x, tuple(range(n - 3)) + (n - 2, n - 3, n - 1))


def split_heads(x, heads):
    """[..., T, h * d_k] -> [..., h, T, d_k]"""
    *lead, steps, width = x.shape
    return _swap_time_and_heads(tn.reshape(x, (*lead, steps, heads, width // heads)))


def merge_heads(x):
    """[..., h, T, d_k] -> [..., T, h * d_k], head i in columns i*d_k .. (i+1)*d_k - 1."""
    *lead, heads, steps, d_k = x.shape
    return tn.reshape(_swap_time_and_heads(x), (*lead, steps, heads * d_k))


def multi_head(x, p):
    """Self-attention: every head projects the same input for Q, K and V."""
    x = tn.as_tensor(x)
    if x.shape[-1] != p.query[0].shape[0]:
        raise ShapeError(f"multi_head: input width {x.shape[-1]} != model dim {p.query[0].shape[0]}")
    q, k, v = (split_heads(tn.matmul(x, tn.concat_lastdim(w)), p.heads) for w in (p.query, p.key, p.value))
    return tn.matmul(merge_heads(attention(q, k, v)), p.output)


def normalize_features(x, epsilon):
    centred = tn.sub(x, tn.mean(x, axis=-1, keepdims=True))
    variance = tn.mean(tn.mul(centred, centred), axis=-1, keepdims=True)
    return tn.mul(centred, tn.power(tn.add(variance, epsilon), -0.5))


def layer_norm(x, p):
    x = tn.as_tensor(x)
    _require_shape(p.gain, (x.shape[-1],), 'layer norm gain')
    return tn.add(tn.mul(normalize_features(x, p.epsilon), p.gain), p.shift)


def positional_embed(steps, tbl):
    if steps > tbl.max_length:
        raise ShapeError(f"positional_embed: {steps} steps exceed table length {tbl.max_length}")
    return tn.index(tbl.table, slice(0, steps))


def dense(x, p):
    x = tn.as_tensor(x)
    if x.shape[-1] != p.in_dim:
        raise ShapeError(f"dense: input width {x.shape[-1]} != weight rows {p.in_dim}")
    if x.ndim == 1:
        row = tn.matmul(tn.reshape(x, (1, p.in_dim)), p.weight)
        return tn.add(tn.reshape(row, (p.out_dim,)), p.bias)
    return tn.add(tn.matmul(x, p.weight), p.bias)


def feed_forward(x, dense1, dense2):
    if dense1.out_dim != dense2.in_dim or dense2.out_dim != dense1.in_dim:
        raise ShapeError(
            f"feed_forward: {dense1.in_dim}->{dense1.out_dim} then "
            f"{dense2.in_dim}->{dense2.out_dim} does not chain back to the model dim"
        )
    return dense(tn.relu(dense(x, dense1)), dense2)


def residual_add(x, f_of_x):
    if x.shape != f_of_x.shape:
        raise ShapeError(f"residual_add: {x.shape} vs {f_of_x.shape}")
    return tn.add(x, f_of_x)


def glorot_limit(shape):
    if len(shape) == 3:
        receptive = shape[2]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    else:
        fan_in, fan_out = shape[0], shape[-1]
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform(rng, shape):
    limit = glorot_limit(shape)
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)
