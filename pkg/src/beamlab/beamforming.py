"""MVDR and GEV beamformer weight computation and application.

Weights are complex arrays shaped (bins, mics) for time-invariant SCMs or
(frames, bins, mics) for time-varying ones. Degenerate bins (silent noise
statistics, vanishing trace) never abort a run: they fall back to the
one-hot reference selector and are reported in a boolean flag array so the
caller can count them.
"""

import numpy as np
import scipy.linalg

from .dsp import Spectrogram

TRACE_FLOOR = 1e-12
DEFAULT_LOADING = 1e-6


class BeamformerError(ValueError):
    """Raised for inconsistent SCM/weight shapes."""


def _check_pair(phi_x, phi_n, ref):
    phi_x = np.asarray(phi_x, dtype=np.complex128)
    phi_n = np.asarray(phi_n, dtype=np.complex128)
    if phi_x.shape != phi_n.shape:
        raise BeamformerError(
            f"SCM shapes differ: {phi_x.shape} vs {phi_n.shape}"
        )
    if phi_x.ndim not in (3, 4) or phi_x.shape[-1] != phi_x.shape[-2]:
        raise BeamformerError(
            f"expected (..., bins, mics, mics), got {phi_x.shape}"
        )
    n_mics = phi_x.shape[-1]
    if not 0 <= ref < n_mics:
        raise BeamformerError(f"reference channel {ref} out of range [0, {n_mics})")
    return phi_x, phi_n, n_mics


def _diag_load(phi_n, loading, n_mics):
    trace = np.einsum("...aa->...", phi_n).real
    eye = np.eye(n_mics)
    return phi_n + (loading * trace / n_mics)[..., None, None] * eye, trace


def mvdr_weights(phi_x, phi_n, ref: int = 0, loading: float = DEFAULT_LOADING):
    """Trace-normalized MVDR weights from speech and noise SCMs.

    Per bin the noise SCM gets relative diagonal loading, then
    w = [Phi_N^-1 Phi_X / tr(Phi_N^-1 Phi_X)] u with u the one-hot
    reference selector. Bins with singular noise statistics or a vanishing
    trace pass the reference channel through and are flagged.

    Returns ``(weights, flagged)``; weights shaped like the SCMs minus one
    matrix dimension, flagged boolean per (frame,) bin.
    """
    phi_x, phi_n, n_mics = _check_pair(phi_x, phi_n, ref)
    loaded, trace_n = _diag_load(phi_n, loading, n_mics)

    degenerate = ~(trace_n > 0.0)
    if np.any(degenerate):
        loaded = loaded.copy()
        loaded[degenerate] = np.eye(n_mics)

    try:
        gain = np.linalg.solve(loaded, phi_x)
    except np.linalg.LinAlgError:
        flat = loaded.reshape(-1, n_mics, n_mics)
        flat_x = phi_x.reshape(-1, n_mics, n_mics)
        gain = np.empty_like(flat_x)
        for i in range(flat.shape[0]):
            try:
                gain[i] = np.linalg.solve(flat[i], flat_x[i])
            except np.linalg.LinAlgError:
                gain[i] = 0.0
        gain = gain.reshape(phi_x.shape)

    lam = np.einsum("...aa->...", gain)
    degenerate |= np.abs(lam) < TRACE_FLOOR
    lam = np.where(degenerate, 1.0, lam)
    weights = gain[..., ref] / lam[..., None]

    selector = np.zeros(n_mics, dtype=np.complex128)
    selector[ref] = 1.0
    weights[degenerate] = selector
    return weights, degenerate


def apply_weights(weights: np.ndarray, spec: Spectrogram) -> Spectrogram:
    """Beamform a multichannel spectrogram: out(t,f) = w(t,f)^H y(t,f).

    Time-invariant weights (bins, mics) broadcast across frames.
    """
    weights = np.asarray(weights, dtype=np.complex128)
    y = spec.values  # (M, T, F)
    n_mics, n_frames, n_bins = y.shape
    if weights.shape == (n_bins, n_mics):
        out = np.einsum("fm,mtf->tf", np.conj(weights), y)
    elif weights.shape == (n_frames, n_bins, n_mics):
        out = np.einsum("tfm,mtf->tf", np.conj(weights), y)
    else:
        raise BeamformerError(
            f"weights {weights.shape} do not match spectrogram "
            f"({n_mics} mics, {n_frames} frames, {n_bins} bins)"
        )
    return Spectrogram(out[None], spec.config)


def gev_weights(phi_x, phi_n, ref: int = 0, loading: float = DEFAULT_LOADING):
    """Maximum-SNR weights: the principal generalized eigenvector per bin.

    Works on time-invariant SCM pairs (bins, mics, mics). Each weight
    vector is unit-norm with its reference component rotated to be real and
    non-negative (the generalized eigenproblem leaves a per-bin phase free,
    which would otherwise scramble the synthesis). Failed bins fall back to
    the reference selector and are flagged.

    Returns ``(weights, flagged)``.
    """
    phi_x, phi_n, n_mics = _check_pair(phi_x, phi_n, ref)
    if phi_x.ndim != 3:
        raise BeamformerError("gev_weights expects time-invariant SCMs")
    loaded, _ = _diag_load(phi_n, loading, n_mics)

    selector = np.zeros(n_mics, dtype=np.complex128)
    selector[ref] = 1.0
    n_bins = phi_x.shape[0]
    weights = np.empty((n_bins, n_mics), dtype=np.complex128)
    flagged = np.zeros(n_bins, dtype=bool)
    for f in range(n_bins):
        try:
            vals, vecs = scipy.linalg.eigh(phi_x[f], loaded[f])
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            weights[f] = selector
            flagged[f] = True
            continue
        w = vecs[:, np.argmax(vals)]
        norm = np.linalg.norm(w)
        if not np.isfinite(norm) or norm == 0.0:
            weights[f] = selector
            flagged[f] = True
            continue
        w = w / norm
        phase = w[ref]
        if np.abs(phase) > 0.0:
            w = w * (np.conj(phase) / np.abs(phase))
        weights[f] = w
    return weights, flagged


def ban_gain(weights: np.ndarray, phi_n) -> np.ndarray:
    """Blind analytic normalization gain for GEV outputs.

    g = sqrt(w^H Phi_N Phi_N w / M) / (w^H Phi_N w), zero where the
    denominator vanishes. Invariant to positive scaling of Phi_N.
    """
    weights = np.asarray(weights, dtype=np.complex128)
    phi_n = np.asarray(phi_n, dtype=np.complex128)
    if phi_n.shape[:-1] != weights.shape:
        raise BeamformerError(
            f"weights {weights.shape} do not match SCMs {phi_n.shape}"
        )
    n_mics = weights.shape[-1]
    phin_w = np.einsum("...ab,...b->...a", phi_n, weights)
    numerator = np.sqrt(np.einsum("...a,...a->...", np.conj(phin_w), phin_w).real / n_mics)
    denominator = np.einsum("...a,...a->...", np.conj(weights), phin_w).real
    return np.divide(
        numerator,
        denominator,
        out=np.zeros_like(numerator),
        where=denominator >= TRACE_FLOOR,
    )
