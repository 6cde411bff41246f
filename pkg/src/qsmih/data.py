"""Dataset ingestion, standardisation, class splits and batch iteration.

Two on-disk formats are supported:

* CSV with a header row. The ``label`` column holds semicolon-joined integer
  ids (``0;2`` for a sample with labels 0 and 2); every other column is a
  numeric feature.
* Packed binary: magic ``QSMD``, little-endian ``u32 N, u32 d, u32 C``, then
  per sample ``u16`` label count, that many ``u32`` label ids and ``d``
  float32 features.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_features, check_label_sets, single_labels

DATASET_MAGIC = b"QSMD"
STD_FLOOR = 1e-8


class DatasetFormatError(ValueError):
    """Raised when a dataset file is malformed."""


@dataclass(frozen=True)
class Sample:
    id: int
    features: np.ndarray
    labels: frozenset[int]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus one label set per row.

    ``ids`` are source sample ids; they survive subsetting so that results can
    always be traced back to rows of the original file.
    """

    features: np.ndarray
    labels: list[frozenset[int]]
    ids: np.ndarray = None
    num_labels: int = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        labels = check_label_sets(self.labels, X.shape[0])
        ids = np.arange(X.shape[0], dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (X.shape[0],):
            raise ValueError("ids must have one entry per sample")
        top = max((max(s) for s in labels), default=-1) + 1
        C = top if self.num_labels is None else int(self.num_labels)
        if top > C:
            raise ValueError(f"label id {top - 1} out of range for num_labels={C}")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "num_labels", C)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(int(i), x, s) for i, x, s in zip(self.ids, self.features, self.labels)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], [self.labels[r] for r in rows], self.ids[rows], self.num_labels)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.labels, self.ids, self.num_labels)


# --------------------------------------------------------------------------- io


def _parse_label_cell(cell: str, lineno: int) -> frozenset[int]:
    try:
        ids = frozenset(int(tok) for tok in cell.split(";") if tok.strip() != "")
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: bad label cell {cell!r}") from None
    if not ids:
        raise DatasetFormatError(f"line {lineno}: empty label cell")
    if min(ids) < 0:
        raise DatasetFormatError(f"line {lineno}: negative label id")
    return ids


def _load_csv(path: Path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "label" not in header:
            raise DatasetFormatError(f"{path}: line 1: no 'label' column in header")
        label_col = header.index("label")
        rows, labels = [], []
        width = len(header)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: dimension mismatch, expected {width - 1} features, "
                    f"got {len(row) - 1}"
                )
            labels.append(_parse_label_cell(row[label_col], lineno))
            try:
                feats = [float(c) for j, c in enumerate(row) if j != label_col]
            except ValueError:
                raise DatasetFormatError(f"{path}: line {lineno}: malformed numeric value") from None
            if not all(math.isfinite(v) for v in feats):
                raise DatasetFormatError(f"{path}: line {lineno}: non-finite feature")
            rows.append(feats)
    if not rows:
        raise DatasetFormatError(f"{path}: empty file (no data rows)")
    return Dataset(np.array(rows, dtype=np.float64), labels)


def _load_packed(path: Path) -> Dataset:
    buf = path.read_bytes()
    if len(buf) == 0:
        raise DatasetFormatError(f"{path}: empty file")
    if buf[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: offset 0: bad magic {buf[:4]!r}")
    if len(buf) < 16:
        raise DatasetFormatError(f"{path}: offset 4: truncated header")
    N, d, C = struct.unpack_from("<III", buf, 4)
    off = 16
    X = np.empty((N, d), dtype=np.float64)
    labels = []
    for i in range(N):
        if off + 2 > len(buf):
            raise DatasetFormatError(f"{path}: offset {off}: truncated at sample {i}")
        (count,) = struct.unpack_from("<H", buf, off)
        off += 2
        need = 4 * count + 4 * d
        if off + need > len(buf):
            raise DatasetFormatError(f"{path}: offset {off}: truncated at sample {i}")
        ids = np.frombuffer(buf, dtype="<u4", count=count, offset=off)
        off += 4 * count
        if count == 0 or np.any(ids >= C):
            raise DatasetFormatError(f"{path}: offset {off}: bad label ids for sample {i}")
        labels.append(frozenset(int(v) for v in ids))
        X[i] = np.frombuffer(buf, dtype="<f4", count=d, offset=off)
        off += 4 * d
    if off != len(buf):
        raise DatasetFormatError(f"{path}: offset {off}: trailing bytes")
    if N == 0:
        raise DatasetFormatError(f"{path}: empty file (N=0)")
    return Dataset(X, labels, num_labels=C)


def _infer_format(path: Path) -> str:
    return "csv" if path.suffix.lower() == ".csv" else "packed-binary"


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load a dataset; ``format`` is ``"csv"`` or ``"packed-binary"`` (inferred from suffix)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    fmt = format or _infer_format(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt in ("packed-binary", "binary", "qsmd"):
        return _load_packed(path)
    raise ValueError(f"unknown dataset format {fmt!r}")


def save_dataset(data: Dataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"f{j}" for j in range(data.dim)])
            for x, s in zip(data.features, data.labels):
                w.writerow([";".join(str(v) for v in sorted(s))] + [repr(float(v)) for v in x])
        return
    parts = [DATASET_MAGIC, struct.pack("<III", len(data), data.dim, data.num_labels)]
    for x, s in zip(data.features, data.labels):
        ids = sorted(s)
        parts.append(struct.pack(f"<H{len(ids)}I", len(ids), *ids))
        parts.append(np.asarray(x, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))


# --------------------------------------------------------------- standardising


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine map to zero mean and unit variance."""

    mean: np.ndarray
    std: np.ndarray = field(repr=False)

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = check_features(X, min_samples=2)
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))

    def transform(self, X) -> np.ndarray:
        X = check_features(X)
        if X.shape[1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} features, got {X.shape[1]}")
        return (X - self.mean) / self.std

    def to_json(self) -> str:
        return json.dumps({"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]})

    @classmethod
    def from_json(cls, text: str) -> "Standardizer":
        obj = json.loads(text)
        return cls(np.asarray(obj["mean"], dtype=np.float64), np.asarray(obj["std"], dtype=np.float64))


def fit_standardizer(data: Dataset) -> Standardizer:
    return Standardizer.fit(data.features)


def apply_standardizer(s: Standardizer, data: Dataset) -> Dataset:
    return data.with_features(s.transform(data.features))


# ---------------------------------------------------------------------- splits


def split_by_class(data: Dataset, seen_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Partition classes at random into seen/unseen and route samples accordingly.

    The seen side receives ``round(seen_fraction * C)`` classes, rounding half up
    (so 0.75 of 10 classes gives 8). Label ids are kept as-is.
    """
    if not 0.0 < seen_fraction < 1.0:
        raise ValueError("seen_fraction must lie in (0, 1)")
    y = single_labels(data.labels)
    C = data.num_labels
    n_seen = math.floor(seen_fraction * C + 0.5)
    if n_seen <= 0 or n_seen >= C:
        raise ValueError(f"split of {C} classes at {seen_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(C)
    seen = np.zeros(C, dtype=bool)
    seen[perm[:n_seen]] = True
    mask = seen[y]
    seen_part, unseen_part = data.subset(np.flatnonzero(mask)), data.subset(np.flatnonzero(~mask))
    if len(seen_part) == 0 or len(unseen_part) == 0:
        raise ValueError("class split produced an empty dataset")
    return seen_part, unseen_part


# --------------------------------------------------------------------- batches


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: list[frozenset[int]]
    indices: np.ndarray
    rows: np.ndarray  # positions within the source Dataset


def batch_iter(data: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[Batch]:
    """Shuffle once per ``(seed, epoch)`` and yield batches.

    A trailing partial batch is kept only if it has at least two samples.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    perm = np.random.default_rng([seed, epoch]).permutation(len(data))
    for start in range(0, len(perm), batch_size):
        rows = perm[start:start + batch_size]
        if len(rows) < 2:
            break
        yield Batch(data.features[rows], [data.labels[r] for r in rows], data.ids[rows], rows)


# ------------------------------------------------------------------- synthetic


def blob_means(n_classes: int, dim: int, min_distance: float, seed: int) -> np.ndarray:
    """Class means with pairwise distance at least ``min_distance``.

    Means are placed on a sphere sized so random draws rarely collide; draws
    are rejected until the separation holds.
    """
    rng = np.random.default_rng(seed)
    if n_classes == 1:
        return np.zeros((1, dim))
    radius = min_distance / (2.0 * math.sin(math.pi / n_classes)) if dim == 2 else min_distance
    if dim == 2:
        phase = rng.uniform(0, 2 * math.pi)
        ang = phase + 2 * math.pi * np.arange(n_classes) / n_classes
        return radius * np.column_stack([np.cos(ang), np.sin(ang)])
    for _ in range(10_000):
        m = rng.standard_normal((n_classes, dim))
        m *= radius / np.linalg.norm(m, axis=1, keepdims=True)
        d = np.linalg.norm(m[:, None] - m[None], axis=-1)
        if d[np.triu_indices(n_classes, 1)].min() >= min_distance:
            return m
        radius *= 1.01
    raise RuntimeError("could not place class means")


def make_blobs(
    n_per_class: int,
    means: np.ndarray,
    *,
    scale: float = 1.0,
    seed: int = 0,
    id_offset: int = 0,
) -> Dataset:
    """Isotropic Gaussian blobs, one class per row of ``means``, class-major order."""
    rng = np.random.default_rng(seed)
    C, d = means.shape
    X = np.concatenate([m + scale * rng.standard_normal((n_per_class, d)) for m in means])
    y = np.repeat(np.arange(C), n_per_class)
    return Dataset(X, y, ids=np.arange(len(y)) + id_offset, num_labels=C)
