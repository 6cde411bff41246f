"""Quadratic (spherical) mutual information objectives and their gradients.

All quantities are computed in float64. Loss sums run over every ordered pair
including the diagonal; gradient sums skip ``i == j``, which changes nothing
because a sample's similarity to itself is constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_codes, single_labels
from .similarity import (
    estimate_batch_m,
    kernel_matrix,
    pairwise_similarity,
    row_norms,
)


@dataclass(frozen=True)
class Potentials:
    v_in: float
    v_all: float
    v_btw: float

    @property
    def qmi(self) -> float:
        return self.v_in + self.v_all - 2.0 * self.v_btw


@dataclass
class LossBundle:
    value: float
    grad: np.ndarray
    parts: dict = field(default_factory=dict)


def _pair_matrix(Y: np.ndarray, measure: str, sigma2: float | None) -> np.ndarray:
    if measure == "gaussian":
        return kernel_matrix(Y, 2.0 * sigma2)
    if measure == "cosine":
        return pairwise_similarity(Y, "cosine")
    raise ValueError(f"unknown measure {measure!r}")


def qmi_potentials(Y, labels, sigma2: float | None = None, measure: str = "gaussian") -> Potentials:
    """Information potentials with class priors ``N_k / N``.

    ``measure="gaussian"`` uses ``K(y_i - y_j; 2 sigma2)``; ``"cosine"`` swaps in the
    rescaled cosine similarity.
    """
    Y = check_codes(Y, min_samples=2)
    y = single_labels(list(labels))
    if measure == "gaussian" and (sigma2 is None or sigma2 <= 0):
        raise ValueError("gaussian potentials need sigma2 > 0")
    K = _pair_matrix(Y, measure, sigma2)
    N = Y.shape[0]
    classes, counts = np.unique(y, return_counts=True)
    priors = counts / N
    v_in = 0.0
    v_btw = 0.0
    for c, p in zip(classes, priors):
        members = y == c
        v_in += K[np.ix_(members, members)].sum()
        v_btw += p * K[members, :].sum()
    v_all = float(np.sum(priors**2)) * K.sum()
    return Potentials(v_in / N**2, v_all / N**2, v_btw / N**2)


def qmi(Y, labels, sigma2: float) -> float:
    """QMI of codes ``Y`` with the class variable under Gaussian Parzen estimates."""
    return qmi_potentials(Y, labels, sigma2).qmi


def qmi_integration_oracle(
    y,
    labels,
    sigma2: float,
    lo: float | None = None,
    hi: float | None = None,
    step: float | None = None,
) -> Potentials:
    """Potentials of 1-D samples by trapezoid integration of the Parzen densities.

    Kept independent of the closed forms: it builds ``p(q, y)`` and ``p(y)`` on a
    grid and integrates their squares and products directly.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    lab = single_labels(list(labels))
    sigma = np.sqrt(sigma2)
    lo = y.min() - 6 * sigma if lo is None else lo
    hi = y.max() + 6 * sigma if hi is None else hi
    step = sigma / 20 if step is None else step
    if step > sigma / 10:
        raise ValueError("grid step must be at most sigma / 10")
    if lo > y.min() - 6 * sigma or hi < y.max() + 6 * sigma:
        raise ValueError("grid must span the data by at least 6 sigma on both sides")
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / step)) + 1)
    N = y.shape[0]
    dens = np.exp(-((grid[None, :] - y[:, None]) ** 2) / (2 * sigma2)) / np.sqrt(2 * np.pi * sigma2)
    p_y = dens.sum(axis=0) / N
    v_in = v_all = v_btw = 0.0
    for c in np.unique(lab):
        p_qy = dens[lab == c].sum(axis=0) / N
        prior = np.mean(lab == c)
        v_in += np.trapezoid(p_qy**2, grid)
        v_all += prior**2 * np.trapezoid(p_y**2, grid)
        v_btw += prior * np.trapezoid(p_qy * p_y, grid)
    return Potentials(float(v_in), float(v_all), float(v_btw))


def qsmi(Y, delta, M: float) -> float:
    """Matrix-form QSMI: ``(1/N^2) 1'(delta * S - S / M) 1`` with cosine ``S``."""
    S = pairwise_similarity(Y, "cosine")
    delta = np.asarray(delta, dtype=np.float64)
    return float(np.sum(delta * S - S / M) / S.shape[0] ** 2)


def clamped_qsmi_loss(S, delta, M: float) -> float:
    """Square-clamped loss ``(1/N^2) 1'(delta * (S-1)^2 + S^2 / M) 1``."""
    S = np.asarray(S, dtype=np.float64)
    if S.min() < -1e-12 or S.max() > 1 + 1e-12:
        raise ValueError("similarity entries must lie in [0, 1]")
    delta = np.asarray(delta, dtype=np.float64)
    return float(np.sum(delta * (S - 1.0) ** 2 + S**2 / M) / S.shape[0] ** 2)


def _similarity_vjp(Y, S, G, measure, sigma2):
    """Pull ``dL/dS`` (summed over all ordered pairs) back to ``dL/dY``."""
    G = G.copy()
    np.fill_diagonal(G, 0.0)
    Gs = G + G.T
    if measure == "cosine":
        r = row_norms(Y)
        U = Y / r[:, None]
        g = 0.5 * (Gs @ U)
        radial = np.einsum("ij,ij->i", g, U)
        return (g - radial[:, None] * U) / r[:, None]
    if measure == "gaussian-normalized":
        W = Gs * S
        return -(W.sum(axis=1)[:, None] * Y - W @ Y) / (2.0 * sigma2)
    raise ValueError(f"unknown measure {measure!r}")


def clamped_qsmi_grad(Y, delta, M: float, measure: str = "cosine", sigma2: float | None = None) -> LossBundle:
    """Clamped loss and its exact gradient with respect to every entry of ``Y``."""
    Y = check_codes(Y, min_samples=2)
    delta = np.asarray(delta, dtype=np.float64)
    N = Y.shape[0]
    if delta.shape != (N, N):
        raise ValueError(f"indicator shape {delta.shape} does not match {N} codes")
    S = pairwise_similarity(Y, measure, sigma2)
    value = clamped_qsmi_loss(S, delta, M)
    dS = (2.0 * delta * (S - 1.0) + (2.0 / M) * S) / N**2
    grad = _similarity_vjp(Y, S, dS, measure, sigma2)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient (code norm hit the floor?)")
    return LossBundle(value, grad)


def hashing_regularizer(Y) -> LossBundle:
    """L1 distance of ``|Y|`` from the all-ones matrix, with subgradient (sign(0) = 0)."""
    Y = np.asarray(Y, dtype=np.float64)
    gap = np.abs(Y) - 1.0
    return LossBundle(float(np.abs(gap).sum()), np.sign(gap) * np.sign(Y))


def reduce_regularizer(reg: LossBundle, reduction: str) -> LossBundle:
    if reduction == "sum":
        return reg
    if reduction == "mean":
        n = max(reg.grad.shape[0], 1)
        return LossBundle(reg.value / n, reg.grad / n)
    raise ValueError(f"unknown reduction {reduction!r}")


def unclamped_qmi_loss(Y, labels, sigma2: float) -> LossBundle:
    """Negative Gaussian QMI and its gradient.

    Written as ``-(1/N^2) sum_ij A_ij K_ij`` where ``A`` folds the three potentials'
    pair weights: same-class indicator, plus sum of squared priors, minus the
    two samples' class priors.
    """
    Y = check_codes(Y, min_samples=2)
    y = single_labels(list(labels))
    if sigma2 is None or sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    N = Y.shape[0]
    classes, inv, counts = np.unique(y, return_inverse=True, return_counts=True)
    P = counts / N
    p = P[inv]
    A = (inv[:, None] == inv[None, :]) + np.sum(P**2) - p[:, None] - p[None, :]
    K = kernel_matrix(Y, 2.0 * sigma2)
    W = A * K
    np.fill_diagonal(W, 0.0)
    value = -float(np.sum(A * K)) / N**2
    grad = (W.sum(axis=1)[:, None] * Y - W @ Y) / (N**2 * sigma2)
    return LossBundle(value, grad)


def combined_loss(
    Y,
    delta_sup,
    delta_unsup=None,
    alpha: float = 0.01,
    beta: float = 0.0,
    measure: str = "cosine",
    sigma2: float | None = None,
    hash_reduction: str = "mean",
) -> LossBundle:
    """Clamped QSMI + ``alpha`` * hashing regulariser (+ ``beta`` * clamped QSMI on clusters).

    With ``hash_reduction="mean"`` the regulariser is averaged over the batch
    rows so that, like the pairwise term, its scale does not grow with the
    batch size; ``"sum"`` uses the plain per-batch sum.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    if (beta > 0) != (delta_unsup is not None):
        raise ValueError("delta_unsup must be given exactly when beta > 0")
    sup = clamped_qsmi_grad(Y, delta_sup, estimate_batch_m(delta_sup), measure, sigma2)
    reg = reduce_regularizer(hashing_regularizer(Y), hash_reduction)
    value = sup.value + alpha * reg.value
    grad = sup.grad + alpha * reg.grad
    parts = {"qsmi_loss": sup.value, "hash": reg.value}
    if beta > 0:
        uns = clamped_qsmi_grad(Y, delta_unsup, estimate_batch_m(delta_unsup), measure, sigma2)
        value += beta * uns.value
        grad = grad + beta * uns.grad
        parts["unsup_loss"] = uns.value
    return LossBundle(value, grad, parts)
