"""A small rectifier MLP with hand-written backprop and Adam.

Checkpoint layout (``.qsme``): magic ``QSME``, ``u32`` layer count, then per
layer ``u32 out, u32 in`` followed by the row-major float64 weights and the
float64 biases, all little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENCODER_MAGIC = b"QSME"


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Encoder:
    """Rectifier on hidden layers, identity on the output layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: weight {W.shape} / bias {b.shape} mismatch")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: input width {W.shape[1]} does not chain")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def code_length(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Encoder":
        return Encoder([W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass
class Cache:
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]


def init_mlp(layer_sizes, seed: int) -> Encoder:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if min(sizes) <= 0:
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return Encoder(weights, biases)


def forward(enc: Encoder, X) -> tuple[np.ndarray, Cache]:
    h = np.asarray(X, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != enc.layer_sizes[0]:
        raise ValueError(f"expected input of width {enc.layer_sizes[0]}, got shape {h.shape}")
    inputs, preacts = [], []
    last = len(enc.weights) - 1
    for k, (W, b) in enumerate(zip(enc.weights, enc.biases)):
        inputs.append(h)
        z = h @ W.T + b
        preacts.append(z)
        h = z if k == last else np.maximum(z, 0.0)
    return h, Cache(inputs, preacts)


def backward(enc: Encoder, cache: Cache, dY) -> list[np.ndarray]:
    """Parameter gradients, ordered like ``enc.params()``; relu'(0) is taken as 0."""
    g = np.asarray(dY, dtype=np.float64)
    if len(cache.preacts) != len(enc.weights) or g.shape != cache.preacts[-1].shape:
        raise ValueError("cache does not match this encoder / upstream gradient")
    grads: list[np.ndarray] = []
    for k in range(len(enc.weights) - 1, -1, -1):
        if k < len(enc.weights) - 1:
            g = g * (cache.preacts[k] > 0)
        grads.append(g.sum(axis=0))
        grads.append(g.T @ cache.inputs[k])
        if k:
            g = g @ enc.weights[k]
    grads.reverse()
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_encoder(cls, enc: Encoder) -> "AdamState":
        return cls([np.zeros_like(p) for p in enc.params()], [np.zeros_like(p) for p in enc.params()])


def adam_step(state: AdamState, enc: Encoder, grads, lr: float = 1e-3) -> tuple[Encoder, AdamState]:
    """In-place bias-corrected Adam update; returns ``(enc, state)`` for convenience."""
    params = enc.params()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameters")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return enc, state


# ----------------------------------------------------------------- checkpoints


def encoder_to_bytes(enc: Encoder) -> bytes:
    parts = [ENCODER_MAGIC, struct.pack("<I", len(enc.weights))]
    for W, b in zip(enc.weights, enc.biases):
        parts.append(struct.pack("<II", *W.shape))
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def encoder_from_bytes(buf: bytes, source: str = "<bytes>") -> Encoder:
    if buf[:4] != ENCODER_MAGIC:
        raise CheckpointFormatError(f"{source}: offset 0: bad magic {buf[:4]!r}")
    if len(buf) < 8:
        raise CheckpointFormatError(f"{source}: offset 4: truncated header")
    (L,) = struct.unpack_from("<I", buf, 4)
    off = 8
    weights, biases = [], []
    for k in range(L):
        if off + 8 > len(buf):
            raise CheckpointFormatError(f"{source}: offset {off}: truncated at layer {k}")
        out, inp = struct.unpack_from("<II", buf, off)
        off += 8
        need = 8 * (out * inp + out)
        if off + need > len(buf):
            raise CheckpointFormatError(f"{source}: offset {off}: truncated at layer {k}")
        W = np.frombuffer(buf, dtype="<f8", count=out * inp, offset=off).reshape(out, inp).astype(np.float64)
        off += 8 * out * inp
        b = np.frombuffer(buf, dtype="<f8", count=out, offset=off).astype(np.float64)
        off += 8 * out
        weights.append(W)
        biases.append(b)
    if off != len(buf):
        raise CheckpointFormatError(f"{source}: offset {off}: trailing bytes")
    try:
        return Encoder(weights, biases)
    except ValueError as exc:
        raise CheckpointFormatError(f"{source}: {exc}") from None


def save_encoder(enc: Encoder, path) -> None:
    Path(path).write_bytes(encoder_to_bytes(enc))


def load_encoder(path) -> Encoder:
    path = Path(path)
    return encoder_from_bytes(path.read_bytes(), str(path))
