"""Input validation helpers shared by the estimator and the functional API."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np
from sklearn.utils.validation import check_array


def check_features(X, *, min_samples: int = 1, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite, C-contiguous float64 matrix."""
    return check_array(
        X,
        dtype=np.float64,
        order="C",
        ensure_min_samples=min_samples,
        input_name=name,
    )


def check_codes(Y, *, min_samples: int = 1) -> np.ndarray:
    """Real-valued code matrix (N x n) as float64."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError(f"expected a 2-D code matrix, got shape {Y.shape}")
    if Y.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} rows, got {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("code matrix contains non-finite values")
    return Y


def check_label_sets(y, n_samples: int | None = None) -> list[frozenset[int]]:
    """Normalise labels to one frozenset of ints per sample.

    Accepts a 1-D integer array (single-label) or any sequence whose items are
    ints or iterables of ints (multi-label).
    """
    if isinstance(y, np.ndarray) and y.ndim == 1 and y.dtype != object:
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.mod(y, 1) == 0):
                raise ValueError("label array must hold integer ids")
        out = [frozenset((int(v),)) for v in y]
    else:
        out = []
        for item in y:
            if isinstance(item, Iterable) and not isinstance(item, (str, bytes)):
                out.append(frozenset(int(v) for v in item))
            else:
                out.append(frozenset((int(item),)))
    for i, s in enumerate(out):
        if not s:
            raise ValueError(f"sample {i} has an empty label set")
        if min(s) < 0:
            raise ValueError(f"sample {i} has a negative label id")
    if n_samples is not None and len(out) != n_samples:
        raise ValueError(f"got {len(out)} label sets for {n_samples} samples")
    return out


def is_single_label(labels: list[frozenset[int]]) -> bool:
    return all(len(s) == 1 for s in labels)


def single_labels(labels: list[frozenset[int]]) -> np.ndarray:
    """Flatten single-label sets to an int array; raises on multi-label input."""
    if not is_single_label(labels):
        raise ValueError("this operation requires single-label samples")
    return np.fromiter((next(iter(s)) for s in labels), dtype=np.int64, count=len(labels))
