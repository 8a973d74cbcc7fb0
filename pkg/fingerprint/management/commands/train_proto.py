from dataclasses import replace
from pathlib import Path

import numpy as np

from fingerprint import checkpoint
from fingerprint.config import ENCODER_KEYS
from fingerprint.episodes import WindowPool, split_known_unknown
from fingerprint.preprocessing import load_windows
from fingerprint.protonet import prototypes_from_batch, save_registry
from fingerprint.tensor import Tensor
from fingerprint.training import embed_samples, train_protonet, write_report, write_timings

from ._base import FingerprintCommand


class Command(FingerprintCommand):
    help = 'Train the encoder as a prototypical network on N-way K-shot episodes (Stage 2)'
    config_flags = ('input', 'output', 'way', 'shot', 'query', 'episodes_per_epoch', 'proto_epochs', 'lr',
                    'train_way') + ENCODER_KEYS

    def add_command_arguments(self, parser):
        parser.add_argument('--unknown', action='store_true',
                            help='Train on train_way random drivers only; the rest are kept as unknown drivers.')

    def run(self, config, options):
        config.require('input', 'output')
        window_set = load_windows(config.input)
        pool = WindowPool(window_set.samples('train'))
        training = config.training_config()
        held_out = {}

        if options['unknown']:
            rng = np.random.default_rng([config.seed, 4])
            pool, unknown = split_known_unknown(pool, config.train_way, rng)
            training = replace(training, way=config.train_way)
            held_out = {'known_ids': pool.class_ids, 'unknown_ids': unknown.class_ids}

        encoder_config = config.encoder_config(window_set.channel_count, window_set.window_length)
        params, report = train_protonet(pool, encoder_config, training, config.seed)
        params.metadata.update(held_out)
        checkpoint.save(config.output, params)

        output = Path(config.output)
        report_path = output.with_suffix('.report.csv')
        write_report(report_path, report)
        write_timings(output.with_suffix('.timing.json'), report)

        members = pool.samples()
        protos = prototypes_from_batch(Tensor(embed_samples(params, members)), [s.label for s in members])
        registry_path = save_registry(output.with_suffix('.prototypes.csv'), protos)

        if held_out:
            self.success(f"Unknown drivers kept out of training: {', '.join(held_out['unknown_ids'])}")
        self.success(f'Saved checkpoint to {config.output}, report to {report_path}, '
                     f'{protos.way} enrolled prototypes to {registry_path}')
