"""File I/O, scene configuration and batch experiment running.

Scene configs are line-oriented ``key = value`` text; unspecified fields
fall back to the randomized defaults of :func:`beamlab.room.sample_scene`
for the configured seed. WAV I/O accepts 16 kHz PCM-16 or IEEE-float-32
RIFF files and always writes float-32. Attention matrices are exported as
flat binary: a (magic, frames, frames) little-endian uint32 header followed
by row-major little-endian float32.
"""

import concurrent.futures
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io.wavfile

from .dsp import SAMPLE_RATE, TimeSignal, stft
from .metrics import joint_loss, si_snr, stoi
from .pipeline import ENHANCE_MODES, EnhanceConfig, enhance
from .room import (
    SIR_GRID_DB,
    RoomError,
    Scene,
    Trajectory,
    mix_scene,
    sample_scene,
)
from .signals import synth_noise, synth_speech

ATTENTION_FILE_MAGIC = 0x31545441  # b"ATT1"

log = logging.getLogger("beamlab")


class WavError(ValueError):
    """Raised for unreadable or unsupported WAV files."""


class ConfigError(ValueError):
    """Raised for malformed scene configuration text."""


class ExperimentError(RuntimeError):
    """Raised when every scene of an experiment fails."""


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def load_wav(path) -> TimeSignal:
    """Read a 16 kHz PCM-16 or float-32 WAV file; PCM-16 scales by 1/32768."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except Exception as exc:
        raise WavError(f"{path}: malformed WAV file ({exc})") from exc
    if rate != SAMPLE_RATE:
        raise WavError(f"{path}: expected {SAMPLE_RATE} Hz, found {rate} Hz")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavError(
            f"{path}: unsupported sample format {data.dtype}, expected "
            "PCM-16 or IEEE-float-32"
        )
    if samples.ndim == 1:
        samples = samples[None, :]
    else:
        samples = samples.T
    return TimeSignal(samples, rate)


def save_wav(path, sig: TimeSignal) -> None:
    """Write a TimeSignal as IEEE-float-32 at its sample rate."""
    data = sig.samples.T.astype(np.float32)
    if data.shape[1] == 1:
        data = data[:, 0]
    scipy.io.wavfile.write(path, sig.sample_rate, data)


# ---------------------------------------------------------------------------
# Scene configuration
# ---------------------------------------------------------------------------

_SCALAR_KEYS = {
    "seed": int,
    "moving": None,  # bool, parsed specially
    "free_sir": None,
    "duration": float,
    "rt60": float,
    "n_interferers": int,
    "target_azimuth_deg": float,
    "target_distance_m": float,
    "target_end_azimuth_deg": float,
    "target_end_distance_m": float,
}
_LIST_KEYS = {
    "room",
    "sensor_snr_db",
    "sir_db",
    "interferer_azimuth_deg",
    "interferer_distance_m",
}
_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False}


def _parse_lines(text):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCALAR_KEYS and key not in _LIST_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)
    return entries


def _get(entries, key, convert, default=None):
    if key not in entries:
        return default
    value, lineno = entries[key]
    try:
        return convert(value)
    except (ValueError, TypeError):
        raise ConfigError(f"line {lineno}: invalid value {value!r} for {key}")


def _get_bool(entries, key, default=False):
    if key not in entries:
        return default
    value, lineno = entries[key]
    if value.lower() not in _BOOL_VALUES:
        raise ConfigError(f"line {lineno}: {key} must be true or false")
    return _BOOL_VALUES[value.lower()]


def _get_floats(entries, key, default=None):
    if key not in entries:
        return default
    value, lineno = entries[key]
    try:
        return [float(v) for v in value.split()]
    except ValueError:
        raise ConfigError(f"line {lineno}: invalid number list {value!r} for {key}")


def parse_scene_config(text: str, default_seed: int = 0) -> Scene:
    """Build a Scene from ``key = value`` text.

    Unspecified fields take the randomized protocol defaults for the seed
    (four-mic circular array of 3.5 cm radius, RT60 in [0.2, 0.5] s, the
    six-level SIR grid, sensor SNR in [30, 40] dB). Out-of-range values and
    unknown keys raise :class:`ConfigError` naming the offending line.
    """
    entries = _parse_lines(text)
    seed = _get(entries, "seed", int, default_seed)
    moving = _get_bool(entries, "moving")
    free_sir = _get_bool(entries, "free_sir")
    duration = _get(entries, "duration", float, 6.0)
    if duration <= 0:
        raise ConfigError(
            f"line {entries['duration'][1]}: duration must be positive"
        )
    n_interferers = _get(entries, "n_interferers", int, None)
    sir = _get_floats(entries, "sir_db")
    if n_interferers is None:
        n_interferers = len(sir) if sir is not None else 1
    room_dims = _get_floats(entries, "room", [6.0, 5.0, 3.0])
    if len(room_dims) != 3:
        raise ConfigError(
            f"line {entries['room'][1]}: room needs three dimensions"
        )

    snr_range: Optional[tuple] = (30.0, 40.0)
    if "sensor_snr_db" in entries:
        value, lineno = entries["sensor_snr_db"]
        if value.lower() == "none":
            snr_range = None
        else:
            vals = _get_floats(entries, "sensor_snr_db")
            if len(vals) == 1:
                vals = [vals[0], vals[0]]
            if len(vals) != 2 or vals[0] > vals[1]:
                raise ConfigError(
                    f"line {lineno}: sensor_snr_db needs 'lo hi' or 'none'"
                )
            snr_range = (vals[0], vals[1])

    try:
        scene = sample_scene(
            seed,
            moving=moving,
            duration=duration,
            n_interferers=n_interferers,
            room_dims=tuple(room_dims),
            sensor_snr_db=snr_range,
        )
    except RoomError as exc:
        raise ConfigError(str(exc)) from exc

    rt60 = _get(entries, "rt60", float, scene.room.rt60)
    if "rt60" in entries and not (rt60 == 0.0 or 0.0 < rt60 <= 2.0):
        raise ConfigError(
            f"line {entries['rt60'][1]}: rt60 must be 0 or in (0, 2], got {rt60}"
        )
    room = type(scene.room)(tuple(room_dims), rt60)

    if sir is not None:
        lineno = entries["sir_db"][1]
        if len(sir) != n_interferers:
            raise ConfigError(
                f"line {lineno}: {n_interferers} interferers need "
                f"{n_interferers} SIR values, got {len(sir)}"
            )
        if not free_sir:
            for s in sir:
                if s not in SIR_GRID_DB:
                    raise ConfigError(
                        f"line {lineno}: sir_db {s} is off the grid "
                        f"{SIR_GRID_DB}; set free_sir = true to allow it"
                    )
        sir = tuple(sir)
    else:
        sir = scene.sir_db

    center = scene.array.center

    def polar(az_deg, dist):
        az = math.radians(az_deg)
        return tuple(
            center + dist * np.array([math.cos(az), math.sin(az), 0.0])
        )

    target = scene.target
    if any(
        k in entries
        for k in (
            "target_azimuth_deg",
            "target_distance_m",
            "target_end_azimuth_deg",
            "target_end_distance_m",
        )
    ):
        az = _get(entries, "target_azimuth_deg", float, 0.0)
        dist = _get(entries, "target_distance_m", float, 1.2)
        for key, val in (("target_azimuth_deg", az),):
            if not -15.0 <= val <= 15.0:
                lineno = entries.get(key, (None, "?"))[1]
                raise ConfigError(
                    f"line {lineno}: target azimuth must stay in the camera "
                    f"cone [-15, 15] degrees, got {val}"
                )
        start = polar(az, dist)
        if moving:
            end_az = _get(entries, "target_end_azimuth_deg", float, -az)
            if not -15.0 <= end_az <= 15.0:
                lineno = entries.get("target_end_azimuth_deg", (None, "?"))[1]
                raise ConfigError(
                    f"line {lineno}: target azimuth must stay in the camera "
                    f"cone [-15, 15] degrees, got {end_az}"
                )
            end = polar(end_az, _get(entries, "target_end_distance_m", float, dist))
        else:
            end = start
        target = Trajectory(start, end, duration)

    interferers = scene.interferers
    if "interferer_azimuth_deg" in entries or "interferer_distance_m" in entries:
        azs = _get_floats(entries, "interferer_azimuth_deg")
        dists = _get_floats(entries, "interferer_distance_m")
        lineno = entries.get(
            "interferer_azimuth_deg", entries.get("interferer_distance_m")
        )[1]
        if azs is None or dists is None or len(azs) != len(dists):
            raise ConfigError(
                f"line {lineno}: interferer azimuths and distances must both "
                "be given, one per interferer"
            )
        if len(azs) != n_interferers:
            raise ConfigError(
                f"line {lineno}: expected {n_interferers} interferer "
                f"positions, got {len(azs)}"
            )
        interferers = tuple(polar(a, d) for a, d in zip(azs, dists))

    try:
        return Scene(
            room=room,
            array=scene.array,
            target=target,
            interferers=interferers,
            sir_db=sir,
            sensor_snr_db=snr_range,
            seed=seed,
        )
    except RoomError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Attention export
# ---------------------------------------------------------------------------

def save_attention(path, matrix: np.ndarray) -> None:
    """Write an attention matrix in the documented flat-binary format."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"attention matrix must be square, got {matrix.shape}")
    n = matrix.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", ATTENTION_FILE_MAGIC, n, n))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def load_attention(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError(f"{path}: truncated attention file")
        magic, rows, cols = struct.unpack("<III", header)
        if magic != ATTENTION_FILE_MAGIC:
            raise ValueError(f"{path}: bad magic 0x{magic:08x}")
        payload = fh.read()
    if len(payload) != 4 * rows * cols:
        raise ValueError(f"{path}: truncated attention payload")
    return (
        np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)
    )


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    "scene_id",
    "mode",
    "sir_db",
    "moving",
    "si_snr_in",
    "si_snr_out",
    "stoi_in",
    "stoi_out",
    "mse_term",
    "snr_term",
    "total_loss",
    "flagged_bins",
)


@dataclass(frozen=True)
class ReportRow:
    scene_id: int
    mode: str
    sir_db: float
    moving: bool
    si_snr_in: float
    si_snr_out: float
    stoi_in: float
    stoi_out: float
    mse_term: float
    snr_term: float
    total_loss: float
    flagged_bins: int

    def as_csv(self) -> str:
        return ",".join(
            [
                str(self.scene_id),
                self.mode,
                f"{self.sir_db:.1f}",
                "1" if self.moving else "0",
                f"{self.si_snr_in:.6f}",
                f"{self.si_snr_out:.6f}",
                f"{self.stoi_in:.6f}",
                f"{self.stoi_out:.6f}",
                f"{self.mse_term:.6f}",
                f"{self.snr_term:.6f}",
                f"{self.total_loss:.6f}",
                str(self.flagged_bins),
            ]
        )


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    attention: dict = field(default_factory=dict)  # file stem -> matrix

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        lines.extend(row.as_csv() for row in self.rows)
        return "\n".join(lines) + "\n"


def export_report(report: ExperimentReport, out_dir) -> list:
    """Write report.csv and one flat-binary file per attention matrix.

    Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    csv_path = out_dir / "report.csv"
    csv_path.write_text(report.to_csv())
    paths.append(csv_path)
    for stem, matrix in sorted(report.attention.items()):
        path = out_dir / f"{stem}.bin"
        save_attention(path, matrix)
        paths.append(path)
    return paths


def _corpus_files(directory):
    files = sorted(Path(directory).glob("*.wav"))
    if not files:
        raise ExperimentError(f"no WAV files in corpus directory {directory}")
    return files


def _load_dry(path, n_samples) -> TimeSignal:
    sig = load_wav(path)
    if sig.n_channels != 1:
        raise WavError(f"{path}: corpus files must be mono")
    x = sig.samples[0]
    if x.size < n_samples:
        reps = int(np.ceil(n_samples / x.size))
        x = np.tile(x, reps)
    return TimeSignal(x[None, :n_samples], sig.sample_rate)


def _run_one_scene(scene, scene_id, modes, speech_files, noise_files, out_dir,
                   mask_mode):
    n_samples = int(round(scene.target.duration * SAMPLE_RATE))
    rng = np.random.default_rng([scene.seed, 0xC0])
    target_dry = _load_dry(
        speech_files[int(rng.integers(len(speech_files)))], n_samples
    )
    interferer_drys = [
        _load_dry(noise_files[int(rng.integers(len(noise_files)))], n_samples)
        for _ in scene.interferers
    ]
    mixture, clean = mix_scene(scene, target_dry, interferer_drys)

    ref = clean.channel(0)
    noisy = mixture.channel(0)
    base_in_snr = si_snr(ref, noisy)
    base_in_stoi = stoi(ref, noisy)

    rows = []
    attention = {}
    moving = not scene.target.is_static
    sir = scene.sir_db[0] if scene.sir_db else float("nan")
    for mode in modes:
        cfg = EnhanceConfig(mode=mode, mask_mode=mask_mode)
        enhanced, artifacts = enhance(mixture, clean, cfg)
        est = enhanced.channel(0)
        spec_ref = stft(TimeSignal(ref[None, :]), cfg.stft)
        spec_est = stft(enhanced, cfg.stft)
        loss = joint_loss(spec_ref, spec_est, ref, est)
        rows.append(
            ReportRow(
                scene_id=scene_id,
                mode=mode,
                sir_db=sir,
                moving=moving,
                si_snr_in=base_in_snr,
                si_snr_out=si_snr(ref, est),
                stoi_in=base_in_stoi,
                stoi_out=stoi(ref, est),
                mse_term=loss.mse_term,
                snr_term=loss.snr_term,
                total_loss=loss.total,
                flagged_bins=artifacts["flagged_count"],
            )
        )
        if out_dir is not None:
            save_wav(Path(out_dir) / f"scene{scene_id:04d}_{mode}.wav", enhanced)
        for stream in ("speech", "noise"):
            matrix = artifacts.get(f"attention_{stream}")
            if matrix is not None:
                attention[f"scene{scene_id:04d}_{mode}_attention_{stream}"] = matrix
    return rows, attention


def run_experiment(
    scenes,
    modes,
    speech_dir,
    noise_dir,
    out_dir=None,
    mask_mode: str = "wlm",
    jobs: int = 1,
) -> ExperimentReport:
    """Synthesize, enhance and score every (scene, mode) pair.

    Dry signals are drawn deterministically per scene seed from the two
    corpus directories. Enhanced WAVs land in ``out_dir`` (when given)
    along with report.csv and the attention dumps. Scenes that fail are
    logged and skipped; if every scene fails, :class:`ExperimentError` is
    raised.
    """
    for mode in modes:
        if mode not in ENHANCE_MODES:
            raise ExperimentError(f"unknown mode {mode!r}")
    speech_files = _corpus_files(speech_dir)
    noise_files = _corpus_files(noise_dir)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    report = ExperimentReport()
    failures = 0

    def job(item):
        scene_id, scene = item
        return _run_one_scene(
            scene, scene_id, modes, speech_files, noise_files, out_dir, mask_mode
        )

    items = list(enumerate(scenes))
    results = {}
    if jobs <= 1:
        for item in items:
            try:
                results[item[0]] = job(item)
            except Exception:
                log.exception("scene %d failed", item[0])
                failures += 1
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(job, item): item[0] for item in items}
            for fut in concurrent.futures.as_completed(futures):
                scene_id = futures[fut]
                try:
                    results[scene_id] = fut.result()
                except Exception:
                    log.exception("scene %d failed", scene_id)
                    failures += 1

    if failures == len(items) and items:
        raise ExperimentError("every scene failed")
    for scene_id in sorted(results):
        rows, attention = results[scene_id]
        report.rows.extend(rows)
        report.attention.update(attention)
    if out_dir is not None:
        export_report(report, out_dir)
    return report


def make_corpus(directory, n_files: int, duration: float = 4.0, seed: int = 0,
                kind: str = "speech") -> list:
    """Write deterministic synthetic WAVs for use as a corpus.

    ``kind`` is ``speech`` for speech-like signals or ``noise`` for
    machine-like interference.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_files):
        if kind == "speech":
            sig = synth_speech((seed, i), duration)
        else:
            sig = synth_noise((seed, i), duration, kind="machine")
        path = directory / f"{kind}{i:03d}.wav"
        save_wav(path, sig)
        paths.append(path)
    return paths
