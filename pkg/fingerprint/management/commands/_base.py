import logging
import sys

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from fingerprint.config import load_run_config
from fingerprint.exceptions import DriverprintError
from fingerprint.serializers import RunConfigSerializer

logger = logging.getLogger('fingerprint.commands')


class FingerprintCommand(BaseCommand):
    """
    Base for the pipeline commands.

    Every command takes ``--config FILE`` and repeatable ``--set key=value``;
    the RunConfig keys listed in ``config_flags`` are also exposed as
    ``--key`` flags. Library errors become ``CommandError`` carrying the
    error's exit code; usage errors exit 1.
    """
    config_flags = ()

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        fallback = parser.error

        def usage_error(message):
            if parser.called_from_command_line:
                parser.print_usage(sys.stderr)
                parser.exit(1, f'{parser.prog}: error: {message}\n')
            fallback(message)

        parser.error = usage_error
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Flat key = value run configuration file.')
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help='Override one configuration key; repeatable.')
        parser.add_argument('--seed', help='Root seed for every random draw.')
        fields = RunConfigSerializer().fields
        for key in self.config_flags:
            flag = f"--{key.replace('_', '-')}"
            if isinstance(fields[key], serializers.BooleanField):
                parser.add_argument(flag, dest=key, action='store_const', const='true')
            else:
                parser.add_argument(flag, dest=key, metavar=key.upper())
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def load_config(self, options):
        flags = {key: options.get(key) for key in (*self.config_flags, 'seed')}
        return load_run_config(options.get('config'), options.get('set'), flags)

    def handle(self, *args, **options):
        try:
            config = self.load_config(options)
            self.run(config, options)
        except DriverprintError as exc:
            logger.debug("Command failed", exc_info=True)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, config, options):
        raise NotImplementedError

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

