"""Training loop, k-means for the unsupervised information needs, and encoding."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import is_single_label
from .data import Dataset, batch_iter
from .encoder import AdamState, Encoder, adam_step, backward, forward, init_mlp
from .information import (
    LossBundle,
    combined_loss,
    hashing_regularizer,
    qmi,
    qsmi,
    reduce_regularizer,
    unclamped_qmi_loss,
)
from .similarity import MEASURES, estimate_batch_m, indicator_matrix

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "loss", "qsmi", "qmi", "seconds")


class TrainingError(RuntimeError):
    pass


class DegenerateLabelsError(TrainingError):
    """The labels carry no information for the chosen objective."""


@dataclass
class TrainConfig:
    code_length: int = 12
    hidden: tuple[int, ...] = (32,)
    lr: float = 0.001
    batch_size: int = 128
    epochs: int = 50
    alpha: float = 0.01
    beta: float = 0.0
    sigma2: float = 100.0
    measure: str = "cosine"
    clamped: bool = True
    unsup_clusters: int = 5
    seed: int = 0
    hash_reduction: str = "mean"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.code_length < 1:
            raise ValueError("code_length must be positive")
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.hash_reduction not in ("mean", "sum"):
            raise ValueError("hash_reduction must be 'mean' or 'sum'")
        if self.beta > 0 and self.unsup_clusters < 2:
            raise ValueError("unsup_clusters must be >= 2 when beta > 0")

    @property
    def variant(self) -> str:
        if not self.clamped:
            return "unclamped-qmi"
        return "clamped-cosine" if self.measure == "cosine" else "clamped-gaussian"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    qsmi: float
    qmi: float
    seconds: float
    hash_gap: float = math.nan  # mean ||y| - 1| over the epoch's codes


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.epochs])

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.loss), repr(e.qsmi), repr(e.qmi), f"{e.seconds:.6f}"])


# ---------------------------------------------------------------------- k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: list[float]
    n_iter: int


def _sq_dists(X, C):
    return (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]


def kmeans_fit(X, k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    An empty cluster is re-seeded at the point farthest from its current
    centre. ``inertia_history`` holds the inertia after every assignment step.
    """
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[0]
    if not 1 <= k <= N:
        raise ValueError(f"k={k} must lie in 1..{N}")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(N)]
    closest = np.maximum(_sq_dists(X, centers[:1])[:, 0], 0.0)
    for c in range(1, k):
        total = closest.sum()
        idx = rng.choice(N, p=closest / total) if total > 0 else rng.integers(N)
        centers[c] = X[idx]
        closest = np.minimum(closest, np.maximum(_sq_dists(X, centers[c:c + 1])[:, 0], 0.0))

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        D = np.maximum(_sq_dists(X, centers), 0.0)
        new = D.argmin(axis=1)
        history.append(float(D[np.arange(N), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        own = D[np.arange(N), labels]
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                centers[c] = X[labels == c].mean(axis=0)
        taken: set[int] = set()
        for c in np.flatnonzero(counts == 0):
            order = np.argsort(-own, kind="stable")
            far = next(int(i) for i in order if int(i) not in taken)
            taken.add(far)
            centers[c] = X[far]
    return KMeansResult(labels, centers, history, it)


def kmeans(features, k: int, seed: int, max_iter: int = 100) -> np.ndarray:
    return kmeans_fit(features, k, seed, max_iter).labels


# ----------------------------------------------------------------------- train


def batch_loss(Y, labels, cfg: TrainConfig, unsup_labels=None) -> LossBundle:
    """The training objective for one batch under ``cfg``'s variant."""
    delta = indicator_matrix(labels)
    delta_u = None if unsup_labels is None else indicator_matrix(unsup_labels)
    if cfg.clamped:
        return combined_loss(
            Y, delta, delta_u if cfg.beta > 0 else None,
            cfg.alpha, cfg.beta, cfg.measure, cfg.sigma2, cfg.hash_reduction,
        )
    sup = unclamped_qmi_loss(Y, labels, cfg.sigma2)
    reg = reduce_regularizer(hashing_regularizer(Y), cfg.hash_reduction)
    value = sup.value + cfg.alpha * reg.value
    grad = sup.grad + cfg.alpha * reg.grad
    parts = {"qmi_loss": sup.value, "hash": reg.value}
    if cfg.beta > 0:
        uns = unclamped_qmi_loss(Y, unsup_labels, cfg.sigma2)
        value += cfg.beta * uns.value
        grad = grad + cfg.beta * uns.grad
        parts["unsup_loss"] = uns.value
    return LossBundle(value, grad, parts)


def train(data: Dataset, cfg: TrainConfig, encoder: Encoder | None = None) -> tuple[Encoder, TrainLog]:
    """Mini-batch Adam on the configured objective; features should be standardised."""
    if len(data) < 2:
        raise ValueError("need at least two training samples")
    single = is_single_label(data.labels)
    if not cfg.clamped:
        if not single:
            raise ValueError("the unclamped QMI objective needs single-label data")
        if len({next(iter(s)) for s in data.labels}) < 2:
            raise DegenerateLabelsError("degenerate labels: a single class gives QMI loss 0 and a zero gradient")
    enc = encoder.copy() if encoder is not None else init_mlp([data.dim, *cfg.hidden, cfg.code_length], cfg.seed)
    state = AdamState.for_encoder(enc)

    unsup = None
    if cfg.beta > 0:
        k = min(cfg.unsup_clusters, len(data))
        unsup = [frozenset((int(c),)) for c in kmeans(data.features, k, cfg.seed)]

    tlog = TrainLog()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses, qsmis, qmis, gaps = [], [], [], []
        for b, batch in enumerate(batch_iter(data, cfg.batch_size, cfg.seed, epoch)):
            Y, cache = forward(enc, batch.features)
            if not np.all(np.isfinite(Y)):
                raise TrainingError(f"non-finite codes at epoch {epoch}, batch {b}")
            ul = None if unsup is None else [unsup[r] for r in batch.rows]
            try:
                bundle = batch_loss(Y, batch.labels, cfg, ul)
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite gradient at epoch {epoch}, batch {b}: {exc}") from None
            if not (math.isfinite(bundle.value) and np.all(np.isfinite(bundle.grad))):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            delta = indicator_matrix(batch.labels)
            losses.append(bundle.value)
            qsmis.append(qsmi(Y, delta, estimate_batch_m(delta)))
            qmis.append(qmi(Y, batch.labels, cfg.sigma2) if single else math.nan)
            gaps.append(float(np.abs(np.abs(Y) - 1.0).mean()))
            grads = backward(enc, cache, bundle.grad)
            adam_step(state, enc, grads, cfg.lr)
        rec = EpochRecord(
            epoch,
            float(np.mean(losses)),
            float(np.mean(qsmis)),
            float(np.mean(qmis)) if single else math.nan,
            time.perf_counter() - t0,
            float(np.mean(gaps)),
        )
        tlog.epochs.append(rec)
        log.info("epoch %d loss %.6f qsmi %.6f", epoch, rec.loss, rec.qsmi)
    return enc, tlog


def encode_dataset(enc: Encoder, data, batch_size: int = 1024) -> np.ndarray:
    """Real-valued codes for every row, in dataset order."""
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != enc.layer_sizes[0]:
        raise ValueError(f"expected {enc.layer_sizes[0]} features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros((0, enc.code_length))
    return np.concatenate([forward(enc, X[s:s + batch_size])[0] for s in range(0, X.shape[0], batch_size)])
