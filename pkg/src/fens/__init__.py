"""
fens: lightweight ConvNet ensembles, from tensors to Table-style reports.
"""

__all__ = ["__version__"]
__version__ = "0.1.0"
