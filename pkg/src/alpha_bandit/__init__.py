"""Alpha Bandit package."""

from . import cli
from .version import __version__

__all__ = ["__version__", "cli", "main"]


def main():
    """Main entry point for the package."""
    import sys

    sys.exit(cli.main())


if __name__ == "__main__":
    main()
