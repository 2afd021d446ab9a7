"""Deterministic speech-like and noise-like test signals.

No recorded audio ships with the package; these generators produce
harmonic, formant-shaped, syllabically modulated signals that exercise the
enhancement chain and the intelligibility metric the way speech does.
Every generator is a pure function of its seed.
"""

import numpy as np
from scipy.signal import lfilter

from .dsp import SAMPLE_RATE, TimeSignal


def _resonators(x, freqs, bandwidths, fs):
    for f, bw in zip(freqs, bandwidths):
        r = np.exp(-np.pi * bw / fs)
        b = [1.0 - r]
        a = [1.0, -2.0 * r * np.cos(2.0 * np.pi * f / fs), r * r]
        x = lfilter(b, a, x)
    return x


def _syllable_envelope(rng, n, fs):
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.08) * fs)
    while pos < n:
        length = int(rng.uniform(0.10, 0.30) * fs)
        seg = np.hanning(length)
        hi = min(pos + length, n)
        env[pos:hi] += seg[: hi - pos]
        gap = rng.uniform(0.03, 0.12)
        if rng.uniform() < 0.18:
            gap += rng.uniform(0.25, 0.60)  # occasional sentence pause
        pos += length + int(gap * fs)
    return np.clip(env, 0.0, 1.0)


def synth_speech(seed, duration=4.0, sample_rate=SAMPLE_RATE) -> TimeSignal:
    """Speech-like mono signal: pitched harmonics under randomized formants,
    a touch of aspiration noise, syllabic amplitude modulation and pauses."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(95.0, 210.0)
    contour = f0 * (
        1.0
        + 0.06 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
        + 0.03 * np.sin(2 * np.pi * rng.uniform(1.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
    )
    phase = 2.0 * np.pi * np.cumsum(contour) / sample_rate

    k_max = max(int(4800.0 / (1.1 * f0)), 3)
    voiced = np.zeros(n)
    for k in range(1, k_max + 1):
        voiced += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k

    formants = rng.uniform([300, 850, 1900, 2900], [750, 1700, 2700, 3800])
    bandwidths = rng.uniform([60, 90, 120, 160], [120, 180, 240, 300])
    voiced = _resonators(voiced, formants, bandwidths, sample_rate)
    voiced /= np.sqrt(np.mean(voiced**2)) + 1e-12

    aspiration = lfilter([1.0, -0.96], [1.0], rng.standard_normal(n))
    aspiration /= np.sqrt(np.mean(aspiration**2)) + 1e-12

    env = _syllable_envelope(rng, n, sample_rate)
    x = (voiced + 0.12 * aspiration) * env
    x /= np.sqrt(np.mean(x**2)) + 1e-12
    return TimeSignal(0.1 * x[None, :], sample_rate)


def synth_noise(seed, duration=4.0, sample_rate=SAMPLE_RATE, kind="machine"):
    """Noise-like mono interference: ``machine`` hum plus filtered noise
    with slow level wobble, or dense ``babble`` from summed speech."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    if kind == "babble":
        x = np.zeros(n)
        for i in range(3):
            x += synth_speech((seed, i), duration, sample_rate).samples[0]
    elif kind == "machine":
        t = np.arange(n) / sample_rate
        hum = sum(
            np.sin(2 * np.pi * 50.0 * k * t + rng.uniform(0, 2 * np.pi)) / k
            for k in range(1, 7)
        )
        rumble = lfilter([1.0], [1.0, -0.985], rng.standard_normal(n))
        wobble = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t)
        x = (0.6 * hum + rumble / np.std(rumble)) * wobble
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x /= np.sqrt(np.mean(x**2)) + 1e-12
    return TimeSignal(0.1 * x[None, :], sample_rate)
