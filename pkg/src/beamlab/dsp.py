"""Time-frequency analysis and synthesis.

Shape conventions used throughout the package:

    time signals:  (channels, samples)
    spectrograms:  (channels, frames, bins)

Framing is left-aligned with no center padding; a partial tail frame is
dropped, so the frame count is ``(n_samples - frame_len) // hop + 1``.
Frames are zero-padded at the end from ``frame_len`` up to ``fft_len``
before the real FFT.
"""

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000


class DspError(ValueError):
    """Raised for invalid signals or analysis configurations."""


@dataclass(frozen=True)
class TimeSignal:
    """Multichannel time-domain signal, ``samples`` shaped (channels, n)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if samples.ndim != 2:
            raise DspError(f"samples must be 1-D or 2-D, got ndim={samples.ndim}")
        if not np.all(np.isfinite(samples)):
            raise DspError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise DspError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    def channel(self, m) -> np.ndarray:
        """1-D view of channel ``m``."""
        return self.samples[m]


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis framing: 25 ms frames, 10 ms hop, 512-point FFT."""

    frame_len: int = 400
    hop: int = 160
    fft_len: int = 512
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.frame_len > self.fft_len:
            raise DspError(
                f"frame_len {self.frame_len} exceeds fft_len {self.fft_len}"
            )
        if self.hop > self.frame_len or self.hop < 1:
            raise DspError(f"hop must be in [1, frame_len], got {self.hop}")
        if self.window not in ("sqrt_hann", "hann", "rect"):
            raise DspError(f"unknown window {self.window!r}")

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1

    def frame_count(self, n_samples) -> int:
        if n_samples < self.frame_len:
            raise DspError(
                f"signal length {n_samples} shorter than one frame "
                f"({self.frame_len} samples)"
            )
        return (n_samples - self.frame_len) // self.hop + 1

    def coverage(self, n_frames) -> int:
        """Number of samples spanned by ``n_frames`` analysis frames."""
        return (n_frames - 1) * self.hop + self.frame_len


def _window(cfg: StftConfig) -> np.ndarray:
    n = np.arange(cfg.frame_len)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / cfg.frame_len)
    if cfg.window == "hann":
        return hann
    if cfg.window == "sqrt_hann":
        return np.sqrt(hann)
    return np.ones(cfg.frame_len)


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT coefficients, ``values`` shaped (channels, frames, bins)."""

    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise DspError(f"values must be 2-D or 3-D, got ndim={values.ndim}")
        if values.shape[-1] != self.config.n_bins:
            raise DspError(
                f"expected {self.config.n_bins} bins, got {values.shape[-1]}"
            )
        object.__setattr__(self, "values", values)

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_frames(self):
        return self.values.shape[1]

    @property
    def n_bins(self):
        return self.values.shape[2]

    def channel(self, m) -> "Spectrogram":
        return Spectrogram(self.values[m : m + 1], self.config)


def stft(x: TimeSignal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Analyze a multichannel signal into its one-sided STFT.

    Parameters
    ----------
    x : TimeSignal
        Input of at least one frame (``cfg.frame_len`` samples).
    cfg : StftConfig
        Framing parameters.

    Returns
    -------
    Spectrogram with shape (channels, frames, fft_len // 2 + 1).
    """
    n_frames = cfg.frame_count(x.n_samples)
    win = _window(cfg)
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x.samples[:, idx] * win  # (C, T, frame_len)
    values = np.fft.rfft(frames, n=cfg.fft_len, axis=-1)
    return Spectrogram(values, cfg)


def istft(spec: Spectrogram) -> TimeSignal:
    """Resynthesize a signal by windowed overlap-add.

    The synthesis window equals the analysis window; the overlap-added
    squared window is divided out, which reconstructs the interior of the
    signal exactly for any window pair whose squared overlap-add stays
    bounded away from zero. Window pairs violating that condition (e.g.
    ``hann`` at hop == frame_len) raise :class:`DspError`.
    """
    cfg = spec.config
    n_frames = spec.n_frames
    n_out = cfg.coverage(n_frames)
    win = _window(cfg)

    frames = np.fft.irfft(spec.values, n=cfg.fft_len, axis=-1)[..., : cfg.frame_len]
    frames = frames * win

    out = np.zeros((spec.n_channels, n_out))
    wsq = np.zeros(n_out)
    for t in range(n_frames):
        lo = t * cfg.hop
        out[:, lo : lo + cfg.frame_len] += frames[:, t]
        wsq[lo : lo + cfg.frame_len] += win * win

    # Overlap-add gain must not vanish on the fully overlapped interior.
    interior = slice(cfg.frame_len, max(n_out - cfg.frame_len, cfg.frame_len))
    if n_out > 2 * cfg.frame_len and np.min(wsq[interior]) < 1e-8:
        raise DspError(
            f"window {cfg.window!r} at hop {cfg.hop} does not satisfy the "
            "overlap-add reconstruction condition"
        )
    nonzero = wsq > 1e-8
    out[:, nonzero] /= wsq[nonzero]
    return TimeSignal(out, SAMPLE_RATE)
