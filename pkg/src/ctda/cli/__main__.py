"""
Command Line Interface for ctda - Main entry point
"""
from ctda.cli import cli

if __name__ == "__main__":
    cli()
