from pathlib import Path

from celery import group

from fingerprint import checkpoint
from fingerprint.config import ENCODER_KEYS
from fingerprint.preprocessing import load_windows
from fingerprint.tasks import train_fold
from fingerprint.training import (
    TrainReport, format_mean_std, summarize_folds, train_classifier, write_report, write_timings,
)

from ._base import FingerprintCommand


def report_paths(output):
    output = Path(output)
    return output.with_suffix('.report.csv'), output.with_suffix('.timing.json')


class Command(FingerprintCommand):
    help = 'Train the encoder with a softmax head (Stage 1) on the training split of a window file'
    config_flags = ('input', 'output', 'epochs', 'batch', 'lr', 'folds') + ENCODER_KEYS

    def add_command_arguments(self, parser):
        parser.add_argument('--cv', action='store_true',
                            help='Report k-fold cross-validated accuracy over all windows (one task per fold); '
                                 'the saved checkpoint is the first fold\'s model.')

    def run(self, config, options):
        config.require('input', 'output')
        window_set = load_windows(config.input)
        report_path, timing_path = report_paths(config.output)

        if options['cv']:
            report = self.cross_validate(config)
            self.success(f'Cross-validated accuracy {format_mean_std(report.test_accuracy, report.test_accuracy_std)}')
        else:
            encoder_config = config.encoder_config(window_set.channel_count, window_set.window_length)
            params, report = train_classifier(window_set.samples('train'), encoder_config,
                                              config.training_config(), config.seed,
                                              eval_samples=window_set.samples('test'))
            checkpoint.save(config.output, params)
            if report.test_accuracy is not None:
                self.success(f'Held-out accuracy {report.test_accuracy:.4f}')

        write_report(report_path, report)
        write_timings(timing_path, report)
        self.success(f'Saved checkpoint to {config.output} and report to {report_path}')

    def cross_validate(self, config):
        tasks = group([
            train_fold.s(str(config.input), fold, config.folds, config.seed, config.to_dict(),
                         str(config.output) if fold == 0 else None)
            for fold in range(config.folds)
        ])
        results = sorted(tasks.apply_async().join(), key=lambda r: r['fold'])
        return summarize_folds([TrainReport.from_dict(r) for r in results])
