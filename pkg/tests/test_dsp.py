import numpy as np
import pytest

from beamlab.dsp import DspError, Spectrogram, StftConfig, TimeSignal, istft, stft


def test_frame_count_six_seconds():
    # Oracle: count frames by walking the framing convention directly.
    n = 6 * 16000
    cfg = StftConfig()
    count, start = 0, 0
    while start + cfg.frame_len <= n:
        count += 1
        start += cfg.hop
    assert count == 598
    spec = stft(TimeSignal(np.random.default_rng(0).standard_normal((1, n))))
    assert spec.n_frames == 598
    assert spec.n_bins == 257


def test_zero_signal_zero_spectrogram():
    spec = stft(TimeSignal(np.zeros((1, 16000))))
    assert np.all(spec.values == 0)


def test_sinusoid_peak_bin():
    cfg = StftConfig()
    fs = 16000
    t = np.arange(fs) / fs
    x = np.sin(2 * np.pi * 1000.0 * t)
    spec = stft(TimeSignal(x[None, :]), cfg)

    # Oracle: direct DFT of one windowed frame.
    win = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(cfg.frame_len) / cfg.frame_len))
    frame = x[: cfg.frame_len] * win
    k = np.arange(cfg.n_bins)[:, None]
    n = np.arange(cfg.frame_len)[None, :]
    direct = np.sum(frame[None, :] * np.exp(-2j * np.pi * k * n / cfg.fft_len), axis=1)

    expected_bin = round(1000 * 512 / 16000)
    assert expected_bin == 32
    assert np.argmax(np.abs(direct)) == expected_bin
    assert np.argmax(np.abs(spec.values[0, 0])) == expected_bin
    np.testing.assert_allclose(spec.values[0, 0], direct, atol=1e-9)


def test_signal_shorter_than_frame_raises():
    with pytest.raises(DspError):
        stft(TimeSignal(np.ones((1, 399))))


def test_roundtrip_interior():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3 * 16000))
    sig = TimeSignal(x)
    out = istft(stft(sig))
    assert out.n_channels == 2
    lo, hi = 400, x.shape[1] - 400
    err = np.linalg.norm(out.samples[:, lo:hi] - x[:, lo:hi])
    assert err / np.linalg.norm(x[:, lo:hi]) <= 1e-6


def test_zero_spectrogram_zero_signal():
    cfg = StftConfig()
    spec = Spectrogram(np.zeros((1, 10, cfg.n_bins)), cfg)
    assert np.all(istft(spec).samples == 0)


def test_linearity():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 8000))
    y = rng.standard_normal((1, 8000))
    a, b = 2.5, -0.75
    lhs = stft(TimeSignal(a * x + b * y)).values
    rhs = a * stft(TimeSignal(x)).values + b * stft(TimeSignal(y)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())


def test_parseval_per_frame():
    cfg = StftConfig()
    rng = np.random.default_rng(11)
    x = rng.standard_normal((1, 4000))
    spec = stft(TimeSignal(x), cfg)
    win = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(cfg.frame_len) / cfg.frame_len))
    for t in range(spec.n_frames):
        frame = x[0, t * cfg.hop : t * cfg.hop + cfg.frame_len] * win
        time_energy = np.sum(frame**2)
        coeff = spec.values[0, t]
        weights = np.full(cfg.n_bins, 2.0)
        weights[0] = weights[-1] = 1.0
        spec_energy = np.sum(weights * np.abs(coeff) ** 2) / cfg.fft_len
        assert abs(time_energy - spec_energy) <= 1e-9 * time_energy


def test_non_reconstructing_window_raises():
    # hann at hop == frame_len zeroes every 400th output sample: no overlap.
    cfg = StftConfig(frame_len=400, hop=400, fft_len=512, window="hann")
    spec = stft(TimeSignal(np.random.default_rng(0).standard_normal((1, 8000))), cfg)
    with pytest.raises(DspError):
        istft(spec)


def test_config_validation():
    with pytest.raises(DspError):
        StftConfig(frame_len=600, hop=160, fft_len=512)
    with pytest.raises(DspError):
        StftConfig(frame_len=400, hop=500, fft_len=512)
    with pytest.raises(DspError):
        StftConfig(window="blackman")


def test_time_signal_validation():
    with pytest.raises(DspError):
        TimeSignal(np.array([[np.nan, 1.0]]))
    sig = TimeSignal(np.arange(5, dtype=float))
    assert sig.n_channels == 1 and sig.n_samples == 5
