"""
Action engine: each CLI subcommand is an action executed through the runner.
"""
