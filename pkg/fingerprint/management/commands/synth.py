from fingerprint.synth import synth_generate, write_dataset

from ._base import FingerprintCommand


class Command(FingerprintCommand):
    help = 'Generate a seeded synthetic telemetry dataset (telemetry.csv + telemetry.json)'
    config_flags = ('output', 'drivers', 'seconds_per_driver', 'synth_channels', 'synth_rate', 'separation')

    def run(self, config, options):
        config.require('output')
        records = synth_generate(
            drivers=config.drivers,
            seconds_per_driver=config.seconds_per_driver,
            seed=config.seed,
            channels=config.synth_channels,
            sample_rate=config.synth_rate,
            separation=config.separation,
        )
        csv_path, _ = write_dataset(records, config.output, seed=config.seed, separation=config.separation)
        rows = sum(len(r) for r in records)
        self.success(f'Wrote {rows} rows for {len(records)} drivers to {csv_path}')
