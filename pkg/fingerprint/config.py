"""
Run configuration.

A run is described by a flat text file of ``key = value`` lines (``#`` starts
a comment, blank lines are ignored). Values are layered as

    DRIVERPRINT_SETTINGS defaults < config file < --set key=value < --flags

and the merged mapping is validated by ``RunConfigSerializer``.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

from django.conf import settings

from .encoder import AttEncConfig
from .exceptions import ConfigError
from .serializers import RunConfigSerializer
from .training import TrainingConfig

logger = logging.getLogger(__name__)

ENCODER_KEYS = ('conv1_width', 'conv2_width', 'conv_channels', 'model_dim', 'heads', 'stack',
                'ff_dim', 'embedding_dim', 'layer_norm_eps')


@dataclass(frozen=True)
class RunConfig:
    seed: int
    conv1_width: int
    conv2_width: int
    conv_channels: int
    model_dim: int
    heads: int
    stack: int
    ff_dim: int
    embedding_dim: int
    layer_norm_eps: float
    window_seconds: float
    overlap: float
    stat_features: bool
    sub_windows: int
    train_fraction: float
    sample_rate: float
    channels: tuple
    lr: float
    beta1: float
    beta2: float
    adam_eps: float
    epochs: int
    batch: int
    way: int
    shot: int
    query: int
    episodes_per_epoch: int
    proto_epochs: int
    folds: int
    eval_episodes: int
    train_way: int
    ways: tuple
    shots: tuple
    drivers: int
    seconds_per_driver: float
    synth_channels: int
    synth_rate: float
    separation: float
    input: str = None
    output: str = None
    checkpoint: str = None

    def encoder_config(self, input_channels, window_length, class_count=0):
        return AttEncConfig(
            input_channels=input_channels,
            window_length=window_length,
            class_count=class_count,
            **{key: getattr(self, key) for key in ENCODER_KEYS},
        )

    def training_config(self):
        return TrainingConfig(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
            epochs=self.epochs, batch_size=self.batch, way=self.way, shot=self.shot,
            queries=self.query, episodes_per_epoch=self.episodes_per_epoch,
            proto_epochs=self.proto_epochs,
        )

    def to_dict(self):
        """Plain values that validate back into an equal ``RunConfig``."""
        data = asdict(self)
        data['channels'] = ','.join(self.channels)
        data['ways'] = ','.join(str(w) for w in self.ways)
        data['shots'] = ','.join(str(s) for s in self.shots)
        return data

    def require(self, *keys):
        missing = [key for key in keys if not getattr(self, key)]
        if missing:
            flags = ', '.join(f"--{key}" for key in missing)
            raise ConfigError(f"missing required setting(s): {flags}")


def default_values():
    return {key.lower(): value for key, value in settings.DRIVERPRINT_SETTINGS.items()}


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"{path}:{number}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def parse_assignments(assignments):
    values = {}
    for item in assignments or ():
        if '=' not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split('=', 1))
        values[key] = value
    return values


def _first_error(errors):
    field, messages = next(iter(errors.items()))
    message = messages[0] if isinstance(messages, list) else messages
    return str(message) if field == 'non_field_errors' else f"{field}: {message}"


def validate(values):
    serializer = RunConfigSerializer(data=values)
    if not serializer.is_valid():
        raise ConfigError(f"invalid configuration: {_first_error(serializer.errors)}")
    return RunConfig(**serializer.validated_data)


def load_run_config(config_path=None, assignments=(), overrides=None):
    values = default_values()
    if config_path:
        values.update(read_config_file(config_path))
    values.update(parse_assignments(assignments))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = validate(values)
    logger.debug(f"Run configuration: {config.to_dict()}")
    return config
