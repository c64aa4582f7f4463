"""Triplet-loss enhanced autoencoders for subvector-permutation invariant embeddings."""

from permvec.errors import (
    DegenerateBaseError,
    FormatError,
    InvalidArgumentError,
    InvalidStateError,
    PermVecError,
    ShapeMismatchError,
    UndefinedRatioError,
)

__version__ = "0.1.0"
