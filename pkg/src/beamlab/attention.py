"""Scaled dot-product attention and deterministic query/key features.

The attention weights follow the usual scaled dot-product recipe: logits
are Q K^T / sqrt(d_k), softmaxed per row with max subtraction. Query/key
features come from one of three deterministic sources that replace a
trained feature extractor:

  (a) spatial signatures of the instantaneous SCMs (:func:`iscm_features`),
  (b) an externally supplied feature file (:func:`load_features`),
  (c) a two-layer ReLU projector with seeded weights
      (:class:`ProjectorWeights`, :func:`project_features`).
"""

import struct
from dataclasses import dataclass

import numpy as np

FEATURE_FILE_MAGIC = 0x31414546  # b"FEA1"


class AttentionError(ValueError):
    """Raised for shape mismatches or malformed feature files."""


def attention_weights(query, key, causal: bool = False) -> np.ndarray:
    """Row-stochastic attention matrix from (frames, d_k) feature matrices.

    With ``causal=True`` logits at future frames are masked out before
    normalization.
    """
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    key = np.atleast_2d(np.asarray(key, dtype=np.float64))
    if query.shape != key.shape:
        raise AttentionError(
            f"query {query.shape} and key {key.shape} must share shape"
        )
    n_frames, d_k = query.shape
    logits = query @ key.T / np.sqrt(d_k)
    if causal:
        logits[np.triu_indices(n_frames, k=1)] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def attend(attention: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Aggregate a value series across frames: Z(t) = sum_t' A[t,t'] V(t').

    Generic over the trailing shape of ``values``.
    """
    attention = np.asarray(attention, dtype=np.float64)
    values = np.asarray(values)
    if attention.ndim != 2 or attention.shape[0] != attention.shape[1]:
        raise AttentionError(f"attention must be square, got {attention.shape}")
    if values.shape[0] != attention.shape[0]:
        raise AttentionError(
            f"values have {values.shape[0]} frames, attention expects "
            f"{attention.shape[0]}"
        )
    if np.max(np.abs(attention.sum(axis=1) - 1.0)) > 1e-9:
        raise AttentionError("attention rows must sum to 1 within 1e-9")
    return np.tensordot(attention, values, axes=(1, 0))


def iscm_features(iscm: np.ndarray) -> np.ndarray:
    """Per-frame spatial signature of an instantaneous SCM series.

    Averages each frame's SCMs over frequency, stacks real and imaginary
    parts of the upper triangle (diagonal included, so d_k = M (M + 1))
    and L2-normalizes each frame vector. All-zero frames stay zero, and
    positive rescaling of the input leaves the features unchanged.
    """
    iscm = np.asarray(iscm)
    if iscm.ndim != 4 or iscm.shape[-1] != iscm.shape[-2]:
        raise AttentionError(
            f"expected (frames, bins, mics, mics), got {iscm.shape}"
        )
    n_mics = iscm.shape[-1]
    mean = iscm.mean(axis=1)  # (T, M, M)
    rows, cols = np.triu_indices(n_mics)
    upper = mean[:, rows, cols]
    feats = np.concatenate([upper.real, upper.imag], axis=1)
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    return np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)


@dataclass(frozen=True)
class ProjectorWeights:
    """Two-layer MLP weights shaped like the 512 -> 256 -> 128 projector."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2:
            raise AttentionError("weight matrices must be 2-D")
        if b1.shape != (w1.shape[1],) or b2.shape != (w2.shape[1],):
            raise AttentionError("bias shapes do not match weight matrices")
        if w1.shape[1] != w2.shape[0]:
            raise AttentionError(
                f"hidden sizes disagree: {w1.shape[1]} vs {w2.shape[0]}"
            )
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            object.__setattr__(self, name, arr)

    @property
    def d_in(self):
        return self.w1.shape[0]

    @property
    def d_out(self):
        return self.w2.shape[1]

    @classmethod
    def random(cls, seed, d_in=512, d_hidden=256, d_out=128):
        """Seeded Gaussian weights with 1/sqrt(fan-in) scaling."""
        rng = np.random.default_rng(seed)
        return cls(
            w1=rng.standard_normal((d_in, d_hidden)) / np.sqrt(d_in),
            b1=np.zeros(d_hidden),
            w2=rng.standard_normal((d_hidden, d_out)) / np.sqrt(d_hidden),
            b2=np.zeros(d_out),
        )


def project_features(features: np.ndarray, weights: ProjectorWeights):
    """Apply the two-layer projector: ReLU(X W1 + b1) W2 + b2."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != weights.d_in:
        raise AttentionError(
            f"features have {features.shape[1]} columns, projector expects "
            f"{weights.d_in}"
        )
    hidden = np.maximum(features @ weights.w1 + weights.b1, 0.0)
    return hidden @ weights.w2 + weights.b2


def softmax_jacobian(probs: np.ndarray) -> np.ndarray:
    """Jacobian of softmax at a probability vector: diag(p) - p p^T."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise AttentionError("expected a probability vector")
    if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-9:
        raise AttentionError("input must be a normalized probability vector")
    return np.diag(probs) - np.outer(probs, probs)


def save_features(path, features: np.ndarray) -> None:
    """Write a feature matrix as flat binary: a (magic, frames, d_k) header
    of little-endian uint32 followed by row-major little-endian float32."""
    features = np.atleast_2d(np.asarray(features))
    n_frames, d_k = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", FEATURE_FILE_MAGIC, n_frames, d_k))
        fh.write(features.astype("<f4").tobytes(order="C"))


def load_features(path) -> np.ndarray:
    """Read a feature file written by :func:`save_features`."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise AttentionError(f"{path}: truncated feature file header")
        magic, n_frames, d_k = struct.unpack("<III", header)
        if magic != FEATURE_FILE_MAGIC:
            raise AttentionError(
                f"{path}: bad magic 0x{magic:08x}, "
                f"expected 0x{FEATURE_FILE_MAGIC:08x}"
            )
        payload = fh.read()
    expected = 4 * n_frames * d_k
    if len(payload) != expected:
        raise AttentionError(
            f"{path}: expected {expected} payload bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n_frames, d_k)
    return data.astype(np.float64)
