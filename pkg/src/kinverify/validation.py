"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InputError, ShapeError


def check_stack(X, width: int, dim: int | None = None) -> np.ndarray:
    """Validate an (n, width, D) stack of embeddings.

    ``width`` is 2 for pairs and 3 for (father, mother, child) triplets.
    """
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim != 3 or X.shape[1] != width:
        raise ShapeError(f"expected shape (n_samples, {width}, dim), got {X.shape}")
    if dim is not None and X.shape[2] != dim:
        raise ShapeError(f"model was fitted on dim {dim}, got dim {X.shape[2]}")
    return X


def check_binary_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be 0 or 1")
    return y.astype(np.int64)
