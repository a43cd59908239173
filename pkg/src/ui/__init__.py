"""Command-line surface."""

from .cli import build_parser, cli_main

__all__ = ["build_parser", "cli_main"]
