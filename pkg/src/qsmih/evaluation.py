"""Retrieval metrics: precision/recall at k, 11-point interpolated AP, mAP and
precision within Hamming radius 2."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hamming import BinaryCodeSet, distance_matrix, distances, rank_by_distance

RECALL_LEVELS = 11
REPORT_HEADER = ("metric", "code_bits", "value", "stddev", "num_queries")


@dataclass(frozen=True)
class QueryResult:
    query_id: int
    ranked_ids: np.ndarray
    relevant: np.ndarray  # bool, aligned with ranked_ids
    ntotal: int

    def __post_init__(self):
        if len(self.ranked_ids) != len(self.relevant):
            raise ValueError("relevance flags must align with the ranking")


def precision_at_k(res: QueryResult, k: int) -> float:
    if not 1 <= k <= len(res.relevant):
        raise ValueError(f"k={k} outside 1..{len(res.relevant)}")
    return float(np.count_nonzero(res.relevant[:k])) / k


def recall_at_k(res: QueryResult, k: int) -> float:
    if not 1 <= k <= len(res.relevant):
        raise ValueError(f"k={k} outside 1..{len(res.relevant)}")
    if res.ntotal <= 0:
        raise ValueError("recall undefined for a query with no relevant items")
    return float(np.count_nonzero(res.relevant[:k])) / res.ntotal


def interpolated_precision(res: QueryResult) -> np.ndarray:
    """``max{Pr@k : Rec@k >= r}`` at r = 0, 0.1, ..., 1 (0 where unreachable)."""
    if len(res.relevant) == 0:
        raise ValueError("empty ranking")
    if res.ntotal <= 0:
        raise ValueError("AP undefined for a query with no relevant items")
    hits = np.cumsum(res.relevant, dtype=np.int64)
    k = np.arange(1, len(hits) + 1)
    prec = hits / k
    tail_max = np.maximum.accumulate(prec[::-1])[::-1]
    out = np.zeros(RECALL_LEVELS)
    levels = np.arange(RECALL_LEVELS)
    # Rec@k >= level/10  <=>  10 * hits >= level * ntotal, kept in integers
    first = np.searchsorted(10 * hits, levels * res.ntotal, side="left")
    ok = first < len(hits)
    out[ok] = tail_max[first[ok]]
    return out


def average_precision_11pt(res: QueryResult) -> float:
    return float(interpolated_precision(res).mean())


def mean_average_precision(results) -> float:
    aps = [average_precision_11pt(r) for r in results if r.ntotal > 0]
    if not aps:
        raise ValueError("no query has a relevant item in the database")
    return float(np.mean(aps))


def relevance(query_labels: frozenset, labels) -> np.ndarray:
    return np.fromiter((not query_labels.isdisjoint(s) for s in labels), dtype=bool, count=len(labels))


def label_overlap(q_labels, db_labels) -> np.ndarray:
    """Q x N boolean matrix: do the label sets intersect."""
    C = 1 + max(max(max(s) for s in q_labels), max(max(s) for s in db_labels))

    def onehot(ls):
        m = np.zeros((len(ls), C), dtype=np.float64)
        for i, s in enumerate(ls):
            m[i, list(s)] = 1.0
        return m

    return onehot(q_labels) @ onehot(db_labels).T > 0


def query_results(db: BinaryCodeSet, queries: BinaryCodeSet) -> list[QueryResult]:
    """Full Hamming rankings (ties by id) for every query against ``db``."""
    if db.labels is None or queries.labels is None:
        raise ValueError("evaluation needs labelled database and query codes")
    D = distance_matrix(queries, db)
    rel = label_overlap(queries.labels, db.labels)
    out = []
    for qi in range(len(queries)):
        order = rank_by_distance(db.ids, D[qi])
        flags = rel[qi, order]
        out.append(QueryResult(int(queries.ids[qi]), db.ids[order], flags, int(rel[qi].sum())))
    return out


def precision_hamming2(index: BinaryCodeSet, query_code, query_labels) -> float:
    """Fraction of relevant items among those within Hamming distance 2; 0 for an empty ball."""
    if index.labels is None:
        raise ValueError("index carries no labels")
    ball = np.flatnonzero(distances(index, query_code) <= 2)
    if ball.size == 0:
        return 0.0
    qs = frozenset(query_labels)
    return float(sum(not qs.isdisjoint(index.labels[i]) for i in ball)) / ball.size


@dataclass(frozen=True)
class MetricRow:
    metric: str
    code_bits: int
    value: float
    stddev: float
    num_queries: int


def evaluate_codes(db: BinaryCodeSet, queries: BinaryCodeSet, ks=(1, 10, 100)) -> list[MetricRow]:
    """mAP, mean Pr@H2 and Pr@k; stddev is taken across queries.

    Queries without any relevant database item are left out of every metric.
    """
    results = [r for r in query_results(db, queries) if r.ntotal > 0]
    if not results:
        raise ValueError("no query has a relevant item in the database")
    keep = {r.query_id for r in results}
    aps = np.array([average_precision_11pt(r) for r in results])
    rows = [MetricRow("mAP", db.n_bits, float(aps.mean()), float(aps.std()), len(aps))]
    ph2 = np.array([
        precision_hamming2(db, queries.codes[i], queries.labels[i])
        for i in range(len(queries))
        if int(queries.ids[i]) in keep
    ])
    rows.append(MetricRow("precision_hamming2", db.n_bits, float(ph2.mean()), float(ph2.std()), len(ph2)))
    for k in ks:
        kk = min(k, len(db))
        p = np.array([precision_at_k(r, kk) for r in results])
        rows.append(MetricRow(f"precision@{k}", db.n_bits, float(p.mean()), float(p.std()), len(p)))
    return rows


def write_report(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([r.metric, r.code_bits, repr(r.value), repr(r.stddev), r.num_queries])
