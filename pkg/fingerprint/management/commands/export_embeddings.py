import numpy as np
import pandas as pd

from fingerprint import checkpoint
from fingerprint.episodes import WindowPool, sample_episode, write_manifest
from fingerprint.preprocessing import load_windows
from fingerprint.protonet import prototypes_from_batch
from fingerprint.tensor import Tensor
from fingerprint.training import embed_samples

from ._base import FingerprintCommand


def embedding_frame(embeddings, labels, protos):
    """Window rows followed by one prototype row per class, flagged in ``prototype``."""
    columns = [f'e{i}' for i in range(embeddings.shape[1])]
    windows = pd.DataFrame(embeddings, columns=columns)
    windows.insert(0, 'class_id', list(labels))
    windows['prototype'] = 0
    centres = pd.DataFrame(protos.prototypes.values, columns=columns)
    centres.insert(0, 'class_id', list(protos.class_ids))
    centres['prototype'] = 1
    return pd.concat([windows, centres], ignore_index=True)


class Command(FingerprintCommand):
    help = 'Write window embeddings and class prototypes as CSV for external 2-D projection'
    config_flags = ('input', 'checkpoint', 'output', 'way', 'shot')

    def add_command_arguments(self, parser):
        parser.add_argument('--episode', action='store_true',
                            help='Export the support set of one sampled way/shot episode instead of every window.')

    def run(self, config, options):
        config.require('input', 'checkpoint', 'output')
        params = checkpoint.load(config.checkpoint)
        samples = load_windows(config.input).samples()
        if options['episode']:
            rng = np.random.default_rng([config.seed, 5])
            episode = sample_episode(WindowPool(samples), config.way, config.shot, 0, rng)
            samples = list(episode.support)
            write_manifest(f'{config.output}.manifest.csv', [episode])

        embeddings = embed_samples(params, samples)
        labels = [s.label for s in samples]
        protos = prototypes_from_batch(Tensor(embeddings), labels)
        frame = embedding_frame(embeddings, labels, protos)
        frame.to_csv(config.output, index=False, float_format='%.17g')
        self.success(f'Wrote {len(samples)} embeddings and {protos.way} prototypes to {config.output}')
