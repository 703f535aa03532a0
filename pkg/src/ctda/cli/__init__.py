"""
Command Line Interface for the ctda lab.

Each command module registers itself on the ``cli`` group when imported.
"""
from ctda.cli.main import cli

# Import command modules to register them with Click
from ctda.cli import config
from ctda.cli import generate
from ctda.cli import train
from ctda.cli import sweep
from ctda.cli import verify
from ctda.cli import report

__all__ = ['cli']
