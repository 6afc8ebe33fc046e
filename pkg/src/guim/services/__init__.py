"""
GUIM Services Layer.

- CLI: Command-line interface (Typer + Rich)
"""

__all__ = ["cli"]
