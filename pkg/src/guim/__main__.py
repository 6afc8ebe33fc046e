"""
GUIM - Main Entry Point.

Enables running the package as a module:
    python -m guim [command] [options]
"""

from guim.services.cli import main

if __name__ == "__main__":
    main()
