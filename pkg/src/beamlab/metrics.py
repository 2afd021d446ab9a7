"""Objective evaluation: joint spectral/time loss, SI-SNR and STOI.

All metric functions take 1-D time-domain arrays (and single-channel
spectrograms where spectral terms are involved).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .dsp import SAMPLE_RATE, Spectrogram

SI_SNR_CAP_DB = 60.0

_STOI_FS = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_N_BANDS = 15
_STOI_LOWEST_CF = 150.0
_STOI_SEG_FRAMES = 30  # 384 ms at 10 kHz with 12.8 ms hop
_STOI_DYN_RANGE_DB = 40.0
_STOI_CLIP_DB = -15.0


class MetricError(ValueError):
    """Raised for mismatched or degenerate metric inputs."""


@dataclass(frozen=True)
class LossReport:
    """Joint training objective, split into its terms.

    ``total`` sums the spectral MSE term and the time-domain error-to-signal
    ratio. ``signal_to_error_ratio`` is the mean per-sample ratio of signal
    power to error power; it is reported for reference only (it grows as
    the estimate improves, so it cannot be summed into a loss) and uses a
    1e-12 per-sample denominator floor.
    """

    mse_term: float
    snr_term: float
    total: float
    signal_to_error_ratio: float


def _spec_values(spec) -> np.ndarray:
    """Single-channel (frames, bins) coefficients from a Spectrogram or a
    bare complex array."""
    if isinstance(spec, Spectrogram):
        if spec.n_channels != 1:
            raise MetricError("expected a single-channel spectrogram")
        return spec.values[0]
    values = np.asarray(spec, dtype=np.complex128)
    if values.ndim != 2:
        raise MetricError(f"expected (frames, bins), got shape {values.shape}")
    return values


def joint_loss(clean_spec, est_spec, clean_time, est_time) -> LossReport:
    """Spectral-magnitude MSE (scaled by 100 / (bins * frames)) plus the
    utterance-level error-to-signal power ratio.

    Spectrograms may be passed as :class:`Spectrogram` or as bare
    (frames, bins) complex arrays.
    """
    clean_values = _spec_values(clean_spec)
    est_values = _spec_values(est_spec)
    if clean_values.shape != est_values.shape:
        raise MetricError(
            f"spectrogram shapes differ: {clean_values.shape} vs "
            f"{est_values.shape}"
        )
    clean_time = np.asarray(clean_time, dtype=np.float64).ravel()
    est_time = np.asarray(est_time, dtype=np.float64).ravel()
    if clean_time.shape != est_time.shape:
        raise MetricError(
            f"signal lengths differ: {clean_time.size} vs {est_time.size}"
        )

    mag_err = np.abs(clean_values) - np.abs(est_values)
    n_frames, n_bins = mag_err.shape
    mse_term = 100.0 / (n_frames * n_bins) * float(np.sum(mag_err**2))

    err = clean_time - est_time
    snr_term = float(np.sum(err**2) / max(np.sum(clean_time**2), 1e-12))
    ratio = float(np.mean(clean_time**2 / np.maximum(err**2, 1e-12)))
    return LossReport(
        mse_term=mse_term,
        snr_term=snr_term,
        total=mse_term + snr_term,
        signal_to_error_ratio=ratio,
    )


def si_snr(ref: np.ndarray, est: np.ndarray) -> float:
    """Scale-invariant SNR in dB, capped at +/-60.

    Both signals are zero-meaned, the estimate is projected onto the
    reference, and the ratio of projected to residual power is returned.
    """
    ref = np.asarray(ref, dtype=np.float64).ravel()
    est = np.asarray(est, dtype=np.float64).ravel()
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.size} vs {est.size}")
    ref = ref - ref.mean()
    est = est - est.mean()
    p_ref = np.dot(ref, ref)
    if p_ref <= 0.0:
        raise MetricError("reference signal has zero power")
    target = (np.dot(est, ref) / p_ref) * ref
    residual = est - target
    p_t = np.dot(target, target)
    p_e = np.dot(residual, residual)
    if p_e == 0.0:
        return SI_SNR_CAP_DB
    if p_t == 0.0:
        return -SI_SNR_CAP_DB
    value = 10.0 * np.log10(p_t / p_e)
    return float(np.clip(value, -SI_SNR_CAP_DB, SI_SNR_CAP_DB))


def _stoi_band_matrix(n_bins: int) -> np.ndarray:
    freqs = np.linspace(0.0, _STOI_FS / 2.0, n_bins)
    centers = _STOI_LOWEST_CF * 2.0 ** (np.arange(_STOI_N_BANDS) / 3.0)
    lo = centers * 2.0 ** (-1.0 / 6.0)
    hi = centers * 2.0 ** (1.0 / 6.0)
    return ((freqs[None, :] >= lo[:, None]) & (freqs[None, :] < hi[:, None])).astype(
        np.float64
    )


def _stoi_frames(x: np.ndarray) -> np.ndarray:
    n_frames = (x.size - _STOI_FRAME) // _STOI_HOP + 1
    idx = np.arange(_STOI_FRAME)[None, :] + _STOI_HOP * np.arange(n_frames)[:, None]
    return x[idx]


def _remove_silent_frames(ref: np.ndarray, est: np.ndarray):
    """Drop frames more than 40 dB below the loudest reference frame and
    re-overlap-add the survivors back to back."""
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(_STOI_FRAME) / _STOI_FRAME)
    ref_frames = _stoi_frames(ref) * win
    est_frames = _stoi_frames(est) * win
    energy_db = 20.0 * np.log10(np.linalg.norm(ref_frames, axis=1) + 1e-300)
    keep = energy_db > energy_db.max() - _STOI_DYN_RANGE_DB
    ref_frames = ref_frames[keep]
    est_frames = est_frames[keep]
    n_kept = ref_frames.shape[0]
    out_len = _STOI_FRAME + max(n_kept - 1, 0) * _STOI_HOP
    ref_out = np.zeros(out_len)
    est_out = np.zeros(out_len)
    for i in range(n_kept):
        lo = i * _STOI_HOP
        ref_out[lo : lo + _STOI_FRAME] += ref_frames[i]
        est_out[lo : lo + _STOI_FRAME] += est_frames[i]
    return ref_out, est_out


def _stoi_band_envelopes(x: np.ndarray, band_matrix: np.ndarray) -> np.ndarray:
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(_STOI_FRAME) / _STOI_FRAME)
    frames = _stoi_frames(x) * win
    spec = np.fft.rfft(frames, n=_STOI_NFFT, axis=1)
    power = np.abs(spec) ** 2
    return np.sqrt(band_matrix @ power.T)  # (bands, frames)


def stoi(ref: np.ndarray, est: np.ndarray, sample_rate: int = SAMPLE_RATE) -> float:
    """Short-time objective intelligibility of ``est`` against ``ref``.

    Both signals are resampled to 10 kHz, silent reference frames are
    removed, one-third-octave band envelopes (15 bands from 150 Hz) are
    compared over sliding 384 ms segments with per-segment normalization
    and -15 dB clipping of the estimate, and the clipped correlations are
    averaged. Needs at least 384 ms of speech-active signal.
    """
    ref = np.asarray(ref, dtype=np.float64).ravel()
    est = np.asarray(est, dtype=np.float64).ravel()
    if ref.shape != est.shape:
        raise MetricError(f"length mismatch: {ref.size} vs {est.size}")

    if sample_rate != _STOI_FS:
        frac = Fraction(_STOI_FS, int(sample_rate))
        ref = resample_poly(ref, frac.numerator, frac.denominator)
        est = resample_poly(est, frac.numerator, frac.denominator)

    if ref.size < _STOI_FRAME:
        raise MetricError("signal too short for STOI")
    ref, est = _remove_silent_frames(ref, est)

    band_matrix = _stoi_band_matrix(_STOI_NFFT // 2 + 1)
    x = _stoi_band_envelopes(ref, band_matrix)
    y = _stoi_band_envelopes(est, band_matrix)
    n_frames = x.shape[1]
    if n_frames < _STOI_SEG_FRAMES:
        raise MetricError(
            f"need at least {_STOI_SEG_FRAMES} active frames (384 ms) for "
            f"STOI, got {n_frames}"
        )

    clip_gain = 10.0 ** (-_STOI_CLIP_DB / 20.0)
    tiny = np.finfo(np.float64).eps
    correlations = []
    for m in range(_STOI_SEG_FRAMES, n_frames + 1):
        seg_x = x[:, m - _STOI_SEG_FRAMES : m]
        seg_y = y[:, m - _STOI_SEG_FRAMES : m]
        alpha = np.linalg.norm(seg_x, axis=1, keepdims=True) / (
            np.linalg.norm(seg_y, axis=1, keepdims=True) + tiny
        )
        seg_y = np.minimum(alpha * seg_y, (1.0 + clip_gain) * seg_x)
        xc = seg_x - seg_x.mean(axis=1, keepdims=True)
        yc = seg_y - seg_y.mean(axis=1, keepdims=True)
        denom = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1) + tiny
        correlations.append(np.sum(xc * yc, axis=1) / denom)
    return float(np.mean(correlations))
