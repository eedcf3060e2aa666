"""Exact affine and spectral explanations of piecewise-linear networks."""

from ._core import (
    FORMAT_VERSION,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Model,
    RegionBoundaryError,
    ResourceError,
    TrainingError,
    affine,
    bias_decomposition,
    forward,
    generate_squares,
    load_model,
    load_tensor,
    manifest_json,
    reduce_coefficients,
    render_square,
    same_region,
    save_model,
    save_tensor,
    split,
    symbolic,
    thin_svd,
    train_autoencoder,
)
from .interchange import write_model

__all__ = [
    "FORMAT_VERSION",
    "DimensionError",
    "Error",
    "FormatError",
    "IoError",
    "Model",
    "RegionBoundaryError",
    "ResourceError",
    "TrainingError",
    "affine",
    "bias_decomposition",
    "forward",
    "generate_squares",
    "load_model",
    "load_tensor",
    "manifest_json",
    "reduce_coefficients",
    "render_square",
    "same_region",
    "save_model",
    "save_tensor",
    "split",
    "symbolic",
    "thin_svd",
    "train_autoencoder",
    "write_model",
]
