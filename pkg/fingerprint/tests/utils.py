import numpy as np

from fingerprint.encoder import AttEncConfig
from fingerprint.preprocessing import WindowedSample


def tiny_config(**overrides):
    values = dict(input_channels=3, window_length=6, conv_channels=4, model_dim=8, heads=2,
                  ff_dim=8, embedding_dim=4)
    values.update(overrides)
    return AttEncConfig(**values)


def random_samples(classes=3, per_class=8, steps=6, channels=3, seed=0, spread=1.0):
    """Windows whose class shifts the channel means by ``spread``."""
    rng = np.random.default_rng(seed)
    samples = []
    for c in range(classes):
        centre = spread * rng.normal(size=channels)
        for i in range(per_class):
            matrix = centre + 0.1 * rng.normal(size=(steps, channels))
            samples.append(WindowedSample(matrix, f'driver_{c:02d}', i * steps, f'rec_{c}'))
    return samples
