"""
Utility functions for CLI exception handling and common operations.
"""
import logging
import sys
import traceback
from dataclasses import replace
from functools import wraps
from typing import Any, Callable, TypeVar

import click

from ctda.config import Config, find_config_dir
from ctda.errors import CtdaError
from ctda.harness.experiment import ExperimentConfig

logger = logging.getLogger(__name__)

# Type variables for function signatures
F = TypeVar('F', bound=Callable[..., Any])


def handle_exceptions(f: F) -> F:
    """
    A decorator for Click commands that handles exceptions and provides
    consistent error reporting.

    Lab errors exit with their own exit code (config 2, verification 3, I/O 4).

    Args:
        f: The Click command function to wrap

    Returns:
        The wrapped function with exception handling
    """
    @wraps(f)
    def wrapper(*args, **kwargs):

        ctx = click.get_current_context(silent=True)
        obj = (ctx and ctx.obj) or {}

        verbose = obj.get('verbose', False)
        exceptions = obj.get('exceptions', False)

        if exceptions:
            return f(*args, **kwargs)

        try:
            return f(*args, **kwargs)
        except click.Abort:
            click.echo("\nOperation aborted by user.", err=True)
            sys.exit(130)
        except click.UsageError as e:
            click.echo(f"\nUsage error: {str(e)}", err=True)
            sys.exit(2)
        except Exception as e:
            click.echo(f"\nError: {str(e)}", err=True)

            if verbose:
                click.echo("\nTraceback:", err=True)
                traceback.print_exc()
            else:
                click.echo("\nFor more details, run with --verbose flag.", err=True)

            sys.exit(e.exit_code if isinstance(e, CtdaError) else 1)

    return wrapper  # type: ignore


def experiment_options(f: F) -> F:
    """The --config and --seed options shared by every experiment command."""
    f = click.option('--seed', type=int, default=None, help='Override generator and training seeds')(f)
    f = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                     help='Experiment JSON (default: experiment.json in the config directory)')(f)
    return f


def load_experiment(config_path: str | None, seed: int | None = None) -> ExperimentConfig:
    """
    Load the experiment for a command and fill in the output root from the environment
    config when the experiment does not name one.

    Args:
        config_path: Path given with --config, or None for the default experiment
        seed: Value of --seed, if any

    Returns:
        ExperimentConfig: The resolved experiment
    """
    ctx = click.get_current_context(silent=True)
    config_dir = ctx.obj.get('config_dir') if ctx and ctx.obj else None

    if config_path is None:
        default = find_config_dir(config_dir) / "experiment.json"
        config_path = str(default) if default.exists() else None

    experiment = ExperimentConfig.load(config_path).with_seed(seed)
    if experiment.outputs is None:
        experiment = replace(experiment, outputs=str(Config.load(config_dir).out_root))

    logger.debug(f"Experiment from {config_path or 'defaults'}, outputs under {experiment.output_root()}")
    return experiment
