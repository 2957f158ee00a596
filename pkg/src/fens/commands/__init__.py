"""
CLI subcommands as registered actions, plus the pipeline they share.
"""

from . import bench, dataset, ensemble, evaluate, report, run, train, tune  # noqa: F401
