"""Spatial covariance algebra.

Shape conventions:

    instantaneous SCMs:  (frames, bins, mics, mics)   rank-1 outer products
    time-varying SCMs:   (frames, bins, mics, mics)
    time-invariant SCMs: (bins, mics, mics)

All constructors produce exactly Hermitian matrices (products of conjugate
pairs round identically), and convex combinations of the rank-1 outer
products keep them positive semidefinite up to rounding.
"""

import numpy as np

from .dsp import Spectrogram

MASK_FLOOR = 1e-10


class ScmError(ValueError):
    """Raised for inconsistent shapes or invalid attention matrices."""


def _check_mask(spec: Spectrogram, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != spec.values.shape[1:]:
        raise ScmError(
            f"mask shape {mask.shape} does not match spectrogram frames/bins "
            f"{spec.values.shape[1:]}"
        )
    if np.any(mask < 0.0):
        raise ScmError("mask values must be non-negative")
    return mask


def compute_iscm(spec: Spectrogram, mask: np.ndarray) -> np.ndarray:
    """Mask-weighted instantaneous SCMs, one rank-1 outer product per bin.

    Returns (frames, bins, mics, mics).
    """
    mask = _check_mask(spec, mask)
    y = spec.values  # (M, T, F)
    outer = np.einsum("atf,btf->tfab", y, np.conj(y))
    return outer * mask[:, :, None, None]


def batch_scm(spec: Spectrogram, mask: np.ndarray):
    """Time-invariant SCMs: mask-weighted average of outer products per bin.

    Bins whose mask sums to zero get a 1e-10 denominator instead of a NaN
    and are reported in the returned diagnostics array.

    Returns ``(scm, flagged)`` with scm shaped (bins, mics, mics) and
    flagged the indices of zero-mask bins.
    """
    mask = _check_mask(spec, mask)
    y = spec.values
    num = np.einsum("tf,atf,btf->fab", mask, y, np.conj(y))
    den = mask.sum(axis=0)
    flagged = np.flatnonzero(den <= 0.0)
    den = np.where(den <= 0.0, MASK_FLOOR, den)
    return num / den[:, None, None], flagged


def attend_scm(iscm: np.ndarray, attention: np.ndarray) -> np.ndarray:
    """Time-varying SCMs: attention-weighted sums of instantaneous SCMs.

    The same (frames, frames) row-stochastic attention matrix is applied at
    every frequency bin. Rows must sum to 1 within 1e-9.
    """
    iscm = np.asarray(iscm)
    attention = np.asarray(attention, dtype=np.float64)
    n_frames = iscm.shape[0]
    if attention.shape != (n_frames, n_frames):
        raise ScmError(
            f"attention must be ({n_frames}, {n_frames}), got {attention.shape}"
        )
    row_sums = attention.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-9:
        raise ScmError("attention rows must sum to 1 within 1e-9")
    return np.tensordot(attention, iscm, axes=(1, 0))


def psd_condition(scm: np.ndarray, eps: float = 0.0):
    """Hermitize and clip negative eigenvalues to zero (or to ``eps`` times
    the largest eigenvalue when a positive floor is requested).

    Returns ``(conditioned, max_clip)`` where max_clip is the largest
    eigenvalue magnitude that had to be raised.
    """
    scm = np.asarray(scm, dtype=np.complex128)
    herm = 0.5 * (scm + np.conj(np.swapaxes(scm, -1, -2)))
    vals, vecs = np.linalg.eigh(herm)
    floor = eps * np.max(vals, axis=-1, keepdims=True) if eps > 0 else 0.0
    clipped = np.maximum(vals, floor)
    max_clip = float(np.max(clipped - vals, initial=0.0))
    fixed = np.einsum("...ab,...b,...cb->...ac", vecs, clipped, np.conj(vecs))
    return fixed, max_clip
