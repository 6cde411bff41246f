"""Sign binarisation, bit packing and linear-scan Hamming search.

Bit ``l`` of a code lives in word ``l // 64`` at bit position ``l % 64``
(least significant first); bits past the code length are always zero.

Code file layout (``.qsmc``, little-endian): magic ``QSMC``, ``u32 n``,
``u32 N``, ``u8 has_labels``, then per item ``u64 id``, ``ceil(n/64)`` ``u64``
words, and when labelled a ``u16`` count plus that many ``u32`` label ids.
Writers append a ``u32`` CRC-32 of everything before it; readers verify it
when present.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_label_sets

CODES_MAGIC = b"QSMC"


class CodeFormatError(ValueError):
    pass


def n_words(n_bits: int) -> int:
    return (n_bits + 63) // 64


@dataclass(frozen=True)
class BinaryCodeSet:
    n_bits: int
    codes: np.ndarray  # (N, n_words) uint64
    ids: np.ndarray
    labels: list[frozenset[int]] | None = None

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint64)
        if codes.ndim != 2 or codes.shape[1] != n_words(self.n_bits):
            raise ValueError(f"codes shape {codes.shape} does not fit {self.n_bits} bits")
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (codes.shape[0],):
            raise ValueError("need one id per code")
        if self.n_bits % 64 and codes.size and np.any(codes[:, -1] >> np.uint64(self.n_bits % 64)):
            raise ValueError("pad bits beyond the code length must be zero")
        labels = None if self.labels is None else check_label_sets(self.labels, codes.shape[0])
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.codes.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryCodeSet):
            return NotImplemented
        return (
            self.n_bits == other.n_bits
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.ids, other.ids)
            and self.labels == other.labels
        )

    def to_bits(self) -> np.ndarray:
        """Unpacked ``{0,1}`` matrix (N x n)."""
        return unpack_bits(self.codes, self.n_bits)

    def code_of(self, item_id: int) -> np.ndarray:
        hits = np.flatnonzero(self.ids == item_id)
        if hits.size == 0:
            raise KeyError(f"id {item_id} not in code set")
        return self.codes[hits[0]]


def pack_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    N, n = bits.shape
    W = n_words(n)
    padded = np.zeros((N, W * 64), dtype=np.uint8)
    padded[:, :n] = bits
    # little-endian bit order inside bytes, little-endian bytes inside words
    as_bytes = np.packbits(padded.reshape(N, W * 8, 8), axis=-1, bitorder="little")
    return as_bytes.reshape(N, W * 8).view("<u8").astype(np.uint64)


def unpack_bits(codes, n_bits: int) -> np.ndarray:
    codes = np.ascontiguousarray(codes, dtype="<u8")
    N = codes.shape[0]
    as_bytes = codes.view(np.uint8).reshape(N, -1)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[:, :n_bits]


def binarize(Y, ids=None, labels=None) -> BinaryCodeSet:
    """Bit is 1 iff the real code entry is >= 0 (so sign(0) maps to +1)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError(f"expected a 2-D code matrix, got shape {Y.shape}")
    ids = np.arange(Y.shape[0]) if ids is None else ids
    return BinaryCodeSet(Y.shape[1], pack_bits(Y >= 0), ids, labels)


def hamming_distance(c1, c2) -> int:
    c1 = np.atleast_1d(np.asarray(c1, dtype=np.uint64))
    c2 = np.atleast_1d(np.asarray(c2, dtype=np.uint64))
    if c1.shape != c2.shape:
        raise ValueError(f"code length mismatch {c1.shape} vs {c2.shape}")
    return int(np.bitwise_count(c1 ^ c2).sum())


def distances(index: BinaryCodeSet, query) -> np.ndarray:
    """Hamming distance from one packed query to every stored code."""
    q = np.atleast_1d(np.asarray(query, dtype=np.uint64))
    if q.shape != (index.codes.shape[1],):
        raise ValueError(f"query has {q.shape[0]} words, index uses {index.codes.shape[1]}")
    return np.bitwise_count(index.codes ^ q).sum(axis=1, dtype=np.int64)


def distance_matrix(queries: BinaryCodeSet, index: BinaryCodeSet) -> np.ndarray:
    if queries.n_bits != index.n_bits:
        raise ValueError("query and index code lengths differ")
    out = np.zeros((len(queries), len(index)), dtype=np.int64)
    for w in range(index.codes.shape[1]):
        out += np.bitwise_count(queries.codes[:, w, None] ^ index.codes[None, :, w])
    return out


def rank_by_distance(ids: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Positions sorted by (distance, id)."""
    return np.lexsort((ids, dist))


def knn_query(index: BinaryCodeSet, query, k: int) -> list[tuple[int, int]]:
    """k nearest codes, ascending distance, ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("empty index")
    d = distances(index, query)
    order = rank_by_distance(index.ids, d)[:k]
    return [(int(index.ids[i]), int(d[i])) for i in order]


def radius_query(index: BinaryCodeSet, query, r: int) -> list[int]:
    if r < 0:
        raise ValueError("radius must be non-negative")
    if len(index) == 0:
        return []
    d = distances(index, query)
    return [int(i) for i in index.ids[d <= r]]


# ------------------------------------------------------------------ file io


def codes_to_bytes(cs: BinaryCodeSet) -> bytes:
    has_labels = cs.labels is not None
    parts = [CODES_MAGIC, struct.pack("<IIB", cs.n_bits, len(cs), int(has_labels))]
    for i in range(len(cs)):
        parts.append(struct.pack("<Q", int(cs.ids[i])))
        parts.append(cs.codes[i].astype("<u8").tobytes())
        if has_labels:
            ids = sorted(cs.labels[i])
            parts.append(struct.pack(f"<H{len(ids)}I", len(ids), *ids))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def codes_from_bytes(buf: bytes, source: str = "<bytes>") -> BinaryCodeSet:
    if len(buf) < 4 or buf[:4] != CODES_MAGIC:
        raise CodeFormatError(f"{source}: offset 0: bad magic {buf[:4]!r}")
    if len(buf) < 13:
        raise CodeFormatError(f"{source}: offset 4: truncated header")
    n_bits, N, has_labels = struct.unpack_from("<IIB", buf, 4)
    if has_labels not in (0, 1):
        raise CodeFormatError(f"{source}: offset 12: bad has_labels flag {has_labels}")
    W = n_words(n_bits)
    off = 13
    ids = np.empty(N, dtype=np.int64)
    codes = np.empty((N, W), dtype=np.uint64)
    labels = [] if has_labels else None
    for i in range(N):
        if off + 8 + 8 * W > len(buf):
            raise CodeFormatError(f"{source}: offset {off}: truncated at item {i}")
        (raw_id,) = struct.unpack_from("<Q", buf, off)
        if raw_id >= 2**63:
            raise CodeFormatError(f"{source}: offset {off}: id {raw_id} out of range at item {i}")
        ids[i] = raw_id
        off += 8
        codes[i] = np.frombuffer(buf, dtype="<u8", count=W, offset=off)
        off += 8 * W
        if has_labels:
            if off + 2 > len(buf):
                raise CodeFormatError(f"{source}: offset {off}: truncated at item {i}")
            (count,) = struct.unpack_from("<H", buf, off)
            off += 2
            if off + 4 * count > len(buf):
                raise CodeFormatError(f"{source}: offset {off}: truncated at item {i}")
            labels.append(frozenset(struct.unpack_from(f"<{count}I", buf, off)))
            off += 4 * count
    rest = len(buf) - off
    if rest == 4:
        (crc,) = struct.unpack_from("<I", buf, off)
        if crc != zlib.crc32(buf[:off]):
            raise CodeFormatError(f"{source}: offset {off}: checksum mismatch")
    elif 0 < rest < 4:
        raise CodeFormatError(f"{source}: offset {off}: truncated checksum")
    elif rest != 0:
        raise CodeFormatError(f"{source}: offset {off}: {rest} unexpected trailing bytes")
    try:
        return BinaryCodeSet(n_bits, codes, ids, labels)
    except ValueError as exc:
        raise CodeFormatError(f"{source}: {exc}") from None


def save_codes(cs: BinaryCodeSet, path) -> None:
    Path(path).write_bytes(codes_to_bytes(cs))


def load_codes(path) -> BinaryCodeSet:
    path = Path(path)
    return codes_from_bytes(path.read_bytes(), str(path))
