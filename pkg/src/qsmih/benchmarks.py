"""Synthetic retrieval benchmarks: end-to-end runs, the loss ablation and the
unseen-class protocol."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, apply_standardizer, blob_means, fit_standardizer, make_blobs, split_by_class
from .evaluation import evaluate_codes
from .hamming import binarize
from .trainer import TrainConfig, TrainLog, encode_dataset, train

VARIANTS = {
    "unclamped-qmi": dict(clamped=False, measure="cosine"),
    "clamped-gaussian": dict(clamped=True, measure="gaussian-normalized"),
    "clamped-cosine": dict(clamped=True, measure="cosine"),
}


def blob_benchmark(
    n_classes: int,
    dim: int,
    n_train: int,
    n_query: int,
    min_distance: float,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Train/query Gaussian blobs (unit variance) with ``n_train``/``n_query`` per class."""
    means = blob_means(n_classes, dim, min_distance, seed)
    train_set = make_blobs(n_train, means, seed=seed + 1)
    query_set = make_blobs(n_query, means, seed=seed + 2, id_offset=len(train_set))
    return train_set, query_set


def three_blobs(seed: int = 0) -> tuple[Dataset, Dataset]:
    """3 classes in 2-D, means 6 apart, 200 train / 100 query per class."""
    return blob_benchmark(3, 2, 200, 100, 6.0, seed)


def ten_blobs(seed: int = 0) -> tuple[Dataset, Dataset]:
    """10 classes in 16-D, 200 train / 50 query per class, overlapping enough to rank variants."""
    return blob_benchmark(10, 16, 200, 50, 4.0, seed)


@dataclass
class RunResult:
    metrics: dict
    log: TrainLog


def fit_and_evaluate(train_set: Dataset, query_set: Dataset, cfg: TrainConfig,
                     database: Dataset | None = None) -> RunResult:
    """Standardise on the training set, train, then score ``query_set`` against ``database``
    (the training set itself by default)."""
    st = fit_standardizer(train_set)
    tr = apply_standardizer(st, train_set)
    enc, tlog = train(tr, cfg)
    db = tr if database is None else apply_standardizer(st, database)
    q = apply_standardizer(st, query_set)
    db_codes = binarize(encode_dataset(enc, db), db.ids, db.labels)
    q_codes = binarize(encode_dataset(enc, q), q.ids, q.labels)
    metrics = {r.metric: r.value for r in evaluate_codes(db_codes, q_codes)}
    return RunResult(metrics, tlog)


@dataclass
class AblationRow:
    variant: str
    map_mean: float
    map_std: float
    prh2_mean: float
    prh2_std: float
    repeats: int


def run_ablation(train_set: Dataset, query_set: Dataset, base: TrainConfig, repeats: int = 3,
                 variants=tuple(VARIANTS)) -> list[AblationRow]:
    """Train each loss variant ``repeats`` times (seeds ``base.seed + r``) with a shared architecture."""
    rows = []
    for name in variants:
        maps, ph2 = [], []
        for r in range(repeats):
            cfg = replace(base, seed=base.seed + r, **VARIANTS[name])
            res = fit_and_evaluate(train_set, query_set, cfg)
            maps.append(res.metrics["mAP"])
            ph2.append(res.metrics["precision_hamming2"])
        rows.append(AblationRow(name, float(np.mean(maps)), float(np.std(maps)),
                                float(np.mean(ph2)), float(np.std(ph2)), repeats))
    return rows


def ablation_ordering(rows: list[AblationRow]) -> str:
    ranked = sorted(rows, key=lambda r: -r.map_mean)
    return " > ".join(r.variant for r in ranked)


def unseen_class_map(train_set: Dataset, query_set: Dataset, cfg: TrainConfig, split_seed: int,
                     seen_fraction: float = 0.75) -> float:
    """Train on the seen classes, then rank unseen-class queries against the unseen part
    of the training pool."""
    seen_tr, unseen_tr = split_by_class(train_set, seen_fraction, split_seed)
    _, unseen_q = split_by_class(query_set, seen_fraction, split_seed)
    return fit_and_evaluate(seen_tr, unseen_q, cfg, database=unseen_tr).metrics["mAP"]
