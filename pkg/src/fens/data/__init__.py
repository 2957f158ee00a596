"""
Dataset ingestion, synthetic glyphs, preprocessing and split management.
"""

from .dataset import Dataset, read_sidecar, sidecar_path, write_sidecar
from .loaders import load_csv_dataset, load_dataset, load_image_folder, write_csv_dataset
from .preprocess import PreprocessSpec, preprocess, resize_bilinear
from .splits import FoldAssignment, holdout_indices, kfold, split_holdout
from .synth import synth_glyphs

__all__ = [
    "Dataset",
    "FoldAssignment",
    "PreprocessSpec",
    "holdout_indices",
    "kfold",
    "load_csv_dataset",
    "load_dataset",
    "load_image_folder",
    "preprocess",
    "read_sidecar",
    "resize_bilinear",
    "sidecar_path",
    "split_holdout",
    "synth_glyphs",
    "write_csv_dataset",
    "write_sidecar",
]
