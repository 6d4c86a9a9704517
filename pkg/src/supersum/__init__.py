"""Exact three-party summation of secret-shared floats via superaccumulators."""

from supersum.params import FpParams, derive_params

__all__ = ["FpParams", "derive_params"]
__version__ = "0.1.0"
