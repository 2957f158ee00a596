"""
Entry point for running the CLI via `python -m fens`.
"""

import sys

from fens.cli import main


if __name__ == "__main__":
    sys.exit(main())
