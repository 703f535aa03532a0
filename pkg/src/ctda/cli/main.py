"""
Main CLI entrypoint and command group definitions.
"""
import logging

import click

from ctda.config import Config
from ctda.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@click.group()
@click.option('--exceptions', '-e', is_flag=True, help='Throw exceptions')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging and tracebacks on errors')
@click.option('--config-dir', type=click.Path(file_okay=False), default=None,
              help='Directory holding config.env and experiment.json')
@click.pass_context
def cli(ctx, verbose, exceptions, config_dir):
    """Contrastive learning and domain adaptation lab."""
    ctx.ensure_object(dict)
    ctx.obj['verbose'] = verbose
    ctx.obj['exceptions'] = exceptions
    ctx.obj['config_dir'] = config_dir

    try:
        env = Config.load(config_dir)
    except ConfigError as e:
        raise click.BadParameter(str(e), param_hint='--config-dir')

    level = logging.DEBUG if verbose else getattr(logging, env.log_level, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
