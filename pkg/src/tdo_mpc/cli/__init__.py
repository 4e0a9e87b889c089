"""CLI 모듈"""

from tdo_mpc.cli.app import cli, main

__all__ = ["cli", "main"]
