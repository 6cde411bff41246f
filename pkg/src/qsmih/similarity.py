"""Pairwise similarity measures, indicator matrices and the in-batch prior."""

from __future__ import annotations

import math

import numpy as np

from ._validation import check_codes

NORM_FLOOR = 1e-12
MEASURES = ("cosine", "gaussian-normalized")


def gaussian_kernel(y, sigma2: float) -> float:
    """Parzen kernel ``(2 pi)^(-n/2) * sigma2^(-1/2) * exp(-y'y / (2 sigma2))``.

    The normalisation uses the square root of the width argument regardless of
    the dimension ``n``; for ``n = 1`` this is the ordinary normal density with
    variance ``sigma2``.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if not np.all(np.isfinite(y)):
        raise ValueError("kernel input must be finite")
    n = y.shape[-1]
    return float(_kernel_const(n, sigma2) * math.exp(-float(y @ y) / (2.0 * sigma2)))


def _kernel_const(n: int, sigma2: float) -> float:
    return (2.0 * math.pi) ** (-n / 2.0) / math.sqrt(sigma2)


def kernel_matrix(Y: np.ndarray, sigma2: float) -> np.ndarray:
    """``K(y_i - y_j; sigma2)`` for all pairs of rows."""
    return _kernel_const(Y.shape[1], sigma2) * np.exp(-squared_distances(Y) / (2.0 * sigma2))


def squared_distances(Y: np.ndarray) -> np.ndarray:
    diff = Y[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def cosine_similarity(y1, y2) -> float:
    """Cosine similarity rescaled to [0, 1]; a zero vector scores 0.5 against anything."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape:
        raise ValueError(f"shape mismatch {y1.shape} vs {y2.shape}")
    floor2 = NORM_FLOOR * NORM_FLOOR
    # one square root of the product keeps +-1 codes exact: S == (n - d) / n
    nn = float(np.sqrt(max(float(y1 @ y1), floor2) * max(float(y2 @ y2), floor2)))
    s = (nn + float(y1 @ y2)) / (2.0 * nn)
    return min(max(s, 0.0), 1.0)


def row_norms(Y: np.ndarray) -> np.ndarray:
    return np.maximum(np.sqrt(np.einsum("ij,ij->i", Y, Y)), NORM_FLOOR)


def pairwise_similarity(Y, measure: str = "cosine", sigma2: float | None = None) -> np.ndarray:
    """Dense N x N similarity matrix with entries in [0, 1] and unit diagonal.

    ``gaussian-normalized`` is ``K(y_i - y_j; 2 sigma2) / K(0; 2 sigma2)``, which
    simplifies to ``exp(-|y_i - y_j|^2 / (4 sigma2))``.
    """
    Y = check_codes(Y, min_samples=2)
    if measure == "cosine":
        sq = np.einsum("ij,ij->i", Y, Y)
        sqf = np.maximum(sq, NORM_FLOOR * NORM_FLOOR)
        nn = np.sqrt(np.outer(sqf, sqf))
        S = (nn + Y @ Y.T) / (2.0 * nn)
        np.clip(S, 0.0, 1.0, out=S)
        # exact unit diagonal for non-degenerate rows; a floored zero row stays at 0.5
        nz = np.sqrt(sq) >= NORM_FLOOR
        S[np.flatnonzero(nz), np.flatnonzero(nz)] = 1.0
        return S
    if measure == "gaussian-normalized":
        if sigma2 is None or not sigma2 > 0:
            raise ValueError("gaussian-normalized similarity needs sigma2 > 0")
        return np.exp(-squared_distances(Y) / (4.0 * sigma2))
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def indicator_matrix(labels) -> np.ndarray:
    """Binary relevance matrix: 1 where two label sets intersect."""
    labels = [frozenset(s) for s in labels]
    if not labels:
        raise ValueError("need at least one sample")
    C = max(max(s) for s in labels) + 1
    onehot = np.zeros((len(labels), C), dtype=np.float64)
    for i, s in enumerate(labels):
        onehot[i, list(s)] = 1.0
    return (onehot @ onehot.T > 0).astype(np.float64)


def estimate_batch_m(delta) -> float:
    """In-batch prior: N_B^2 divided by the number of ones in the indicator."""
    delta = np.asarray(delta, dtype=np.float64)
    total = delta.sum()
    if total <= 0:
        raise ValueError("indicator matrix has no nonzero entries")
    return delta.shape[0] ** 2 / total
