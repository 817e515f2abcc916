"""Input validation helpers used throughout the package.

Each helper either returns a cleaned-up ``float64``/``int64`` array or
raises one of the errors from :mod:`specseg.errors` with a message that
names the offending input.
"""

import numpy as np

from .errors import DataError, ShapeError


def check_gray_image(img, name="image"):
    """Validate a single-channel intensity image.

    Returns a 2-D contiguous float64 array with values in [0, 1].
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
        raise DataError(
            f"{name} intensities must lie in [0, 1], "
            f"got range [{arr.min():g}, {arr.max():g}]"
        )
    return np.clip(np.ascontiguousarray(arr), 0.0, 1.0)


def check_affinity(w, name="affinity matrix", sym_tol=1e-6):
    """Validate a square symmetric non-negative affinity matrix.

    Symmetry is accepted up to ``sym_tol`` and enforced exactly on the
    returned copy.
    """
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if not np.allclose(arr, arr.T, atol=sym_tol, rtol=0.0):
        raise DataError(f"{name} is not symmetric within {sym_tol:g}")
    if arr.min() < -sym_tol:
        raise DataError(f"{name} has negative entries (min {arr.min():g})")
    arr = (arr + arr.T) / 2.0
    return np.clip(arr, 0.0, None)


def check_label_mask(mask, name="label mask"):
    """Validate an integer label image, returning an int64 copy."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        as_int = np.asarray(arr, dtype=np.int64)
        if not np.array_equal(as_int, arr):
            raise DataError(f"{name} must hold integer labels")
        arr = as_int
    if arr.min() < 0:
        raise DataError(f"{name} has negative labels")
    return arr.astype(np.int64, copy=True)


def check_feature_matrix(f, name="feature matrix"):
    """Validate a 2-D finite feature matrix, returning float64."""
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr
