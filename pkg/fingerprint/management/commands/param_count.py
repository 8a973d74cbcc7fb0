from fingerprint import encoder as enc
from fingerprint.config import ENCODER_KEYS
from fingerprint.preprocessing import load_windows

from ._base import FingerprintCommand

REFERENCE_ATTENC_PARAMS = 31162


class Command(FingerprintCommand):
    help = 'Print the trainable parameter count of an encoder configuration'
    config_flags = ('input',) + ENCODER_KEYS

    def add_command_arguments(self, parser):
        parser.add_argument('--input-channels', type=int, default=6,
                            help='Channels per time step (ignored with --input).')
        parser.add_argument('--window-length', type=int, default=30,
                            help='Time steps per window (ignored with --input).')
        parser.add_argument('--classes', type=int, default=0,
                            help='Size of the softmax head; 0 counts the encoder alone.')
        parser.add_argument('--compare', action='store_true',
                            help='Also print the recurrent-cell count at the model width and the reference count.')

    def run(self, config, options):
        channels, length = options['input_channels'], options['window_length']
        if config.input:
            window_set = load_windows(config.input)
            channels, length = window_set.channel_count, window_set.window_length
        params = enc.init(config.encoder_config(channels, length, options['classes']), config.seed)
        count = enc.param_count(params)
        self.stdout.write(str(count))
        if options['compare']:
            recurrent = enc.recurrent_param_count(config.model_dim)
            verdict = 'fewer' if count < recurrent else 'not fewer'
            self.stdout.write(f'recurrent cell at width {config.model_dim}: {recurrent} '
                              f'(encoder has {verdict} parameters)')
            self.stdout.write(f'reference AttEnc count: {REFERENCE_ATTENC_PARAMS}')
