import logging

import numpy as np

from fingerprint import checkpoint
from fingerprint.episodes import WindowPool
from fingerprint.exceptions import DataError
from fingerprint.preprocessing import load_windows
from fingerprint.protonet import load_registry, predict
from fingerprint.tensor import Tensor
from fingerprint.training import embed_samples, evaluate_classifier, evaluate_episodes, write_evaluations

from ._base import FingerprintCommand

logger = logging.getLogger('fingerprint.commands')


class Command(FingerprintCommand):
    help = 'Score a checkpoint: held-out classifier accuracy or N-way K-shot episodic accuracy'
    config_flags = ('input', 'checkpoint', 'output', 'way', 'shot', 'query', 'eval_episodes', 'ways', 'shots')

    def add_command_arguments(self, parser):
        parser.add_argument('--episodic', action='store_true',
                            help='Evaluate episodes even when the checkpoint has a softmax head.')
        parser.add_argument('--unknown', action='store_true',
                            help='2-way episodes over the drivers held out by train_proto --unknown.')
        parser.add_argument('--registry', help='Classify held-out windows against an enrolled prototype CSV.')

    def run(self, config, options):
        config.require('input', 'checkpoint')
        params = checkpoint.load(config.checkpoint)
        window_set = load_windows(config.input)

        if options['registry']:
            self.score_registry(params, window_set, options['registry'])
        elif options['unknown']:
            unknown = params.metadata.get('unknown_ids')
            if not unknown:
                raise DataError(f"checkpoint {config.checkpoint} holds no unknown drivers; "
                                "train it with train_proto --unknown")
            pool = WindowPool(window_set.samples()).subset(unknown)
            shots = (config.shot,) if options.get('shot') else config.shots
            self.score_episodes(params, pool, config, (2,), shots)
        elif params.classifier is not None and not options['episodic']:
            accuracy = evaluate_classifier(params, self.test_samples(window_set))
            self.success(f'Classifier accuracy {accuracy:.4f}')
        else:
            ways = (config.way,) if options.get('way') else config.ways
            shots = (config.shot,) if options.get('shot') else config.shots
            self.score_episodes(params, WindowPool(self.test_samples(window_set)), config, ways, shots)

    def test_samples(self, window_set):
        samples = window_set.samples('test')
        if not samples:
            logger.warning("Window file has no held-out windows; evaluating on all windows")
            samples = window_set.samples()
        return samples

    def score_episodes(self, params, pool, config, ways, shots):
        evaluations = []
        for way in ways:
            for shot in shots:
                result = evaluate_episodes(params, pool, way, shot, config.query, config.eval_episodes, config.seed)
                evaluations.append(result)
                self.stdout.write(
                    f'{way}-way {shot}-shot: accuracy {result.mean:.4f} std {result.std:.4f} '
                    f'chance {result.chance:.4f} p={result.p_value:.3g}'
                )
        if config.output:
            write_evaluations(config.output, evaluations)
            self.success(f'Wrote {len(evaluations)} evaluation rows to {config.output}')

    def score_registry(self, params, window_set, registry_path):
        protos = load_registry(registry_path)
        samples = self.test_samples(window_set)
        predicted = predict(Tensor(embed_samples(params, samples)), protos)
        accuracy = float(np.mean([p == s.label for p, s in zip(predicted, samples)]))
        self.success(f'Registry accuracy {accuracy:.4f} over {len(samples)} windows and {protos.way} prototypes')
