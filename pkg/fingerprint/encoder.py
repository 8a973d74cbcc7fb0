"""
Attention-based encoder: two 1-D convolutions, learned positional rows,
``stack`` post-norm blocks of multi-head attention and feed-forward, mean
pooling over time and a dense projection to the embedding.
"""
from dataclasses import dataclass, field, fields, asdict

import numpy as np

from . import layers
from . import tensor as tn
from .exceptions import ConfigError, ShapeError
from .layers import (
    Conv1dParams, DenseParams, LayerNormParams, MultiHeadParams, PositionalEmbeddingTable,
)


@dataclass(frozen=True)
class AttEncConfig:
    input_channels: int
    window_length: int
    conv1_width: int = 3
    conv2_width: int = 3
    conv_channels: int = 32
    model_dim: int = 64
    heads: int = 16
    stack: int = 1
    ff_dim: int = 128
    embedding_dim: int = 64
    class_count: int = 0
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        for f in fields(self):
            if f.name in ('class_count', 'layer_norm_eps'):
                continue
            if getattr(self, f.name) < 1:
                raise ConfigError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if self.class_count < 0:
            raise ConfigError(f"class_count must be nonnegative, got {self.class_count}")
        if self.model_dim % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide model_dim ({self.model_dim})")
        if self.layer_norm_eps <= 0:
            raise ConfigError("layer_norm_eps must be positive")

    @property
    def d_k(self):
        return self.model_dim // self.heads

    def to_dict(self):
        return asdict(self)


@dataclass
class EncoderBlockParams:
    attention: MultiHeadParams
    norm1: LayerNormParams
    ff1: DenseParams
    ff2: DenseParams
    norm2: LayerNormParams

    def named_tensors(self):
        for prefix, part in (('attention', self.attention), ('norm1', self.norm1),
                             ('ff1', self.ff1), ('ff2', self.ff2), ('norm2', self.norm2)):
            for name, t in part.named_tensors():
                yield f'{prefix}.{name}', t


@dataclass
class EncoderParams:
    config: AttEncConfig
    conv1: Conv1dParams
    conv2: Conv1dParams
    positions: PositionalEmbeddingTable
    blocks: list
    projection: DenseParams
    classifier: DenseParams = None
    metadata: dict = field(default_factory=dict)

    def named_parameters(self):
        for prefix, part in (('conv1', self.conv1), ('conv2', self.conv2), ('positions', self.positions)):
            for name, t in part.named_tensors():
                yield f'{prefix}.{name}', t
        for i, block in enumerate(self.blocks):
            for name, t in block.named_tensors():
                yield f'blocks.{i}.{name}', t
        for name, t in self.projection.named_tensors():
            yield f'projection.{name}', t
        if self.classifier is not None:
            for name, t in self.classifier.named_tensors():
                yield f'classifier.{name}', t

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def state_dict(self):
        return {name: t.values for name, t in self.named_parameters()}

    def copy(self):
        return from_state_dict(self.config, {k: v.copy() for k, v in self.state_dict().items()},
                               metadata=dict(self.metadata))


def init(config, seed):
    """Glorot-uniform weights, zero biases and shifts, unit layer-norm gains."""
    if not isinstance(config, AttEncConfig):
        raise ConfigError(f"expected AttEncConfig, got {type(config).__name__}")
    rng = np.random.default_rng(seed)
    glorot = lambda *shape: layers.glorot_uniform(rng, shape)
    d, m = config.model_dim, config.d_k

    conv1 = Conv1dParams(glorot(config.conv_channels, config.input_channels, config.conv1_width),
                         layers.zeros((config.conv_channels,)))
    conv2 = Conv1dParams(glorot(d, config.conv_channels, config.conv2_width), layers.zeros((d,)))
    positions = PositionalEmbeddingTable(glorot(config.window_length, d))
    blocks = []
    for _ in range(config.stack):
        attention = MultiHeadParams(
            query=[glorot(d, m) for _ in range(config.heads)],
            key=[glorot(d, m) for _ in range(config.heads)],
            value=[glorot(d, m) for _ in range(config.heads)],
            output=glorot(config.heads * m, d),
        )
        blocks.append(EncoderBlockParams(
            attention=attention,
            norm1=LayerNormParams(layers.ones((d,)), layers.zeros((d,)), config.layer_norm_eps),
            ff1=DenseParams(glorot(d, config.ff_dim), layers.zeros((config.ff_dim,))),
            ff2=DenseParams(glorot(config.ff_dim, d), layers.zeros((d,))),
            norm2=LayerNormParams(layers.ones((d,)), layers.zeros((d,)), config.layer_norm_eps),
        ))
    projection = DenseParams(glorot(d, config.embedding_dim), layers.zeros((config.embedding_dim,)))
    classifier = None
    if config.class_count:
        classifier = DenseParams(glorot(config.embedding_dim, config.class_count),
                                 layers.zeros((config.class_count,)))
    return EncoderParams(config, conv1, conv2, positions, blocks, projection, classifier)


def from_state_dict(config, arrays, metadata=None):
    """Rebuild parameters from named arrays, e.g. a loaded checkpoint."""
    params = init(config, seed=0)
    expected = dict(params.named_parameters())
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise ShapeError(f"parameter names do not match config: missing {missing}, unexpected {extra}")
    for name, t in expected.items():
        values = np.asarray(arrays[name], dtype=np.float64)
        if values.shape != t.shape:
            raise ShapeError(f"{name}: expected shape {t.shape}, got {values.shape}")
        t.values = values.copy()
    params.metadata = dict(metadata or {})
    return params


def _block(x, block):
    x = layers.layer_norm(layers.residual_add(x, layers.multi_head(x, block.attention)), block.norm1)
    return layers.layer_norm(layers.residual_add(x, layers.feed_forward(x, block.ff1, block.ff2)), block.norm2)


def encode(window, p):
    """[T, D] -> [M], or a batch [B, T, D] -> [B, M]."""
    x = tn.as_tensor(window)
    cfg = p.config
    if x.ndim not in (2, 3) or x.shape[-2:] != (cfg.window_length, cfg.input_channels):
        raise ShapeError(
            f"encode: expected window [{cfg.window_length}, {cfg.input_channels}] "
            f"(optionally batched), got {x.shape}"
        )
    x = tn.relu(layers.conv1d(x, p.conv1))
    x = tn.relu(layers.conv1d(x, p.conv2))
    x = tn.add(x, layers.positional_embed(cfg.window_length, p.positions))
    for block in p.blocks:
        x = _block(x, block)
    pooled = tn.mean(x, axis=-2)
    return layers.dense(pooled, p.projection)


def logits(window, p):
    if p.classifier is None:
        raise ConfigError("encoder has no classifier head")
    return layers.dense(encode(window, p), p.classifier)


def classify(window, p):
    return tn.softmax_lastdim(logits(window, p))


def param_count(p):
    return sum(int(np.prod(t.shape)) for t in p.parameters())


def enumerate_param_count(p):
    """Count by walking the parameter record field by field."""
    total = 0
    parts = [p.conv1.kernel, p.conv1.bias, p.conv2.kernel, p.conv2.bias, p.positions.table]
    for block in p.blocks:
        mh = block.attention
        parts += [*mh.query, *mh.key, *mh.value, mh.output]
        parts += [block.norm1.gain, block.norm1.shift, block.norm2.gain, block.norm2.shift]
        parts += [block.ff1.weight, block.ff1.bias, block.ff2.weight, block.ff2.bias]
    parts += [p.projection.weight, p.projection.bias]
    if p.classifier is not None:
        parts += [p.classifier.weight, p.classifier.bias]
    for t in parts:
        count = 1
        for extent in t.values.shape:
            count *= extent
        total += count
    return total


def recurrent_param_count(width):
    """Gate-rich recurrent cell: four gates, each with input, recurrent and bias terms."""
    return 4 * (width * width + width * width + width)
