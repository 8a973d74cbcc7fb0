from fingerprint.preprocessing import load_csv, preprocess_records, save_windows

from ._base import FingerprintCommand


class Command(FingerprintCommand):
    help = 'Normalise, window and optionally featurise telemetry CSV into a window file'
    config_flags = ('input', 'output', 'window_seconds', 'overlap', 'stat_features', 'sub_windows',
                    'train_fraction', 'sample_rate', 'channels')

    def run(self, config, options):
        config.require('input', 'output')
        records = load_csv(config.input, channels=config.channels or None, sample_rate=config.sample_rate or None)
        window_set = preprocess_records(
            records,
            window_seconds=config.window_seconds,
            overlap=config.overlap,
            use_stat_features=config.stat_features,
            sub_windows=config.sub_windows,
            train_fraction=config.train_fraction,
            seed=config.seed,
        )
        save_windows(config.output, window_set)
        self.success(
            f'Wrote {len(window_set)} windows of shape {window_set.windows.shape[1:]} '
            f'({int(window_set.holdout.sum())} held out) to {config.output}'
        )
