import dataclasses
import math

import numpy as np
import pytest
import scipy.io.wavfile

from beamlab.dsp import TimeSignal
from beamlab.harness import (
    ConfigError,
    ExperimentError,
    WavError,
    export_report,
    load_attention,
    load_wav,
    make_corpus,
    parse_scene_config,
    run_experiment,
    save_attention,
    save_wav,
)
from beamlab.room import SIR_GRID_DB, sample_scene


class TestSceneConfig:
    def test_empty_config_gives_defaulted_scene(self):
        scene = parse_scene_config("", default_seed=17)
        reference = sample_scene(17, moving=False, duration=6.0)
        assert scene.room == reference.room
        assert scene.sir_db == reference.sir_db
        assert scene.seed == 17

    def test_rt60_override(self):
        scene = parse_scene_config("seed = 3\nrt60 = 0.43\n")
        assert scene.room.rt60 == 0.43

    def test_off_grid_sir_rejected_unless_freed(self):
        with pytest.raises(ConfigError) as err:
            parse_scene_config("sir_db = 99\n")
        assert "line 1" in str(err.value)
        scene = parse_scene_config("sir_db = 99\nfree_sir = true\n")
        assert scene.sir_db == (99.0,)

    def test_grid_sir_accepted(self):
        for sir in SIR_GRID_DB:
            scene = parse_scene_config(f"sir_db = {sir:g}\n")
            assert scene.sir_db == (sir,)

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError) as err:
            parse_scene_config("seed = 1\nbogus = 2\n")
        assert "line 2" in str(err.value)
        assert "bogus" in str(err.value)

    def test_negative_rt60_names_line(self):
        with pytest.raises(ConfigError) as err:
            parse_scene_config("# comment\nrt60 = -1\n")
        assert "line 2" in str(err.value)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError) as err:
            parse_scene_config("seed = 1\nseed = 2\n")
        assert "line 2" in str(err.value)

    def test_invalid_number(self):
        with pytest.raises(ConfigError) as err:
            parse_scene_config("duration = banana\n")
        assert "line 1" in str(err.value)

    def test_sensor_snr_none_and_range(self):
        assert parse_scene_config("sensor_snr_db = none\n").sensor_snr_db is None
        assert parse_scene_config("sensor_snr_db = 25 35\n").sensor_snr_db == (25.0, 35.0)

    def test_target_geometry_override(self):
        scene = parse_scene_config(
            "seed = 5\ntarget_azimuth_deg = 10\ntarget_distance_m = 1.0\n"
        )
        delta = np.asarray(scene.target.start) - scene.array.center
        assert abs(np.linalg.norm(delta) - 1.0) < 1e-9
        assert abs(math.degrees(math.atan2(delta[1], delta[0])) - 10.0) < 1e-9

    def test_target_outside_cone_rejected(self):
        with pytest.raises(ConfigError):
            parse_scene_config("target_azimuth_deg = 40\n")

    def test_interferer_count_mismatch(self):
        with pytest.raises(ConfigError):
            parse_scene_config(
                "n_interferers = 2\ninterferer_azimuth_deg = 45\n"
                "interferer_distance_m = 1.0\n"
            )

    def test_moving_endpoints(self):
        scene = parse_scene_config(
            "moving = true\ntarget_azimuth_deg = 12\ntarget_distance_m = 1.0\n"
            "target_end_azimuth_deg = -12\ntarget_end_distance_m = 1.5\n"
        )
        assert not scene.target.is_static


class TestWavIo:
    def test_float32_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = rng.standard_normal((4, 1600)).astype(np.float32).astype(np.float64)
        sig = TimeSignal(samples)
        path = tmp_path / "x.wav"
        save_wav(path, sig)
        loaded = load_wav(path)
        assert loaded.n_channels == 4
        np.testing.assert_array_equal(loaded.samples, samples)

    def test_pcm16_scaling(self, tmp_path):
        path = tmp_path / "pcm.wav"
        data = np.array([-32768, 0, 16384, 32767], dtype=np.int16)
        scipy.io.wavfile.write(path, 16000, data)
        sig = load_wav(path)
        np.testing.assert_allclose(
            sig.samples[0], [-1.0, 0.0, 0.5, 32767 / 32768], atol=1e-12
        )

    def test_wrong_sample_rate_names_rates(self, tmp_path):
        path = tmp_path / "sr.wav"
        scipy.io.wavfile.write(path, 44100, np.zeros(100, dtype=np.float32))
        with pytest.raises(WavError) as err:
            load_wav(path)
        assert "16000" in str(err.value) and "44100" in str(err.value)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not a riff file at all")
        with pytest.raises(WavError):
            load_wav(path)

    def test_unsupported_dtype(self, tmp_path):
        path = tmp_path / "i32.wav"
        scipy.io.wavfile.write(path, 16000, np.zeros(100, dtype=np.int32))
        with pytest.raises(WavError):
            load_wav(path)


class TestAttentionDump:
    def test_size_arithmetic(self, tmp_path):
        n = 598
        matrix = np.zeros((n, n), dtype=np.float32)
        path = tmp_path / "att.bin"
        save_attention(path, matrix)
        assert path.stat().st_size == 12 + 4 * n * n

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        matrix = rng.uniform(0, 1, (9, 9)).astype(np.float32).astype(np.float64)
        path = tmp_path / "att.bin"
        save_attention(path, matrix)
        np.testing.assert_array_equal(load_attention(path), matrix)


class TestRunExperiment:
    @pytest.fixture(scope="class")
    def corpora(self, tmp_path_factory):
        base = tmp_path_factory.mktemp("corpora")
        speech = base / "speech"
        noise = base / "noise"
        make_corpus(speech, 2, duration=1.2, seed=1, kind="speech")
        make_corpus(noise, 2, duration=1.2, seed=2, kind="noise")
        return speech, noise

    def _scenes(self, n=2, duration=1.2):
        return [
            dataclasses.replace(
                sample_scene(50 + i, moving=False, duration=duration), sir_db=(0.0,)
            )
            for i in range(n)
        ]

    def test_row_cardinality_and_export(self, corpora, tmp_path):
        speech, noise = corpora
        out = tmp_path / "out"
        report = run_experiment(
            self._scenes(), ["passthrough", "mvdr-batch"], speech, noise, out_dir=out
        )
        assert len(report.rows) == 4
        csv = (out / "report.csv").read_text().strip().splitlines()
        assert len(csv) == 5
        assert len(csv[0].split(",")) == len(csv[1].split(","))
        assert (out / "scene0000_mvdr-batch.wav").exists()

    def test_determinism_bit_identical(self, corpora, tmp_path):
        speech, noise = corpora
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_experiment(
                self._scenes(), ["mvdr-tv-iscmqk"], speech, noise, out_dir=out
            )
            outs.append(out)
        for rel in ("report.csv", "scene0000_mvdr-tv-iscmqk.wav",
                    "scene0000_mvdr-tv-iscmqk_attention_speech.bin"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()

    def test_attention_dump_matches_frames(self, corpora, tmp_path):
        speech, noise = corpora
        out = tmp_path / "att"
        run_experiment(self._scenes(n=1), ["mvdr-tv-iscmqk"], speech, noise, out_dir=out)
        matrix = load_attention(out / "scene0000_mvdr-tv-iscmqk_attention_noise.bin")
        # The mixture carries the reverberation tail beyond the dry duration.
        enhanced = load_wav(out / "scene0000_mvdr-tv-iscmqk.wav")
        n_frames = (enhanced.n_samples - 400) // 160 + 1
        assert matrix.shape == (n_frames, n_frames)

    def test_passthrough_neutrality(self, corpora, tmp_path):
        speech, noise = corpora
        report = run_experiment(
            self._scenes(), ["passthrough"], speech, noise, out_dir=None
        )
        for row in report.rows:
            assert abs(row.si_snr_out - row.si_snr_in) <= 0.01

    def test_parallel_jobs_match_serial(self, corpora, tmp_path):
        speech, noise = corpora
        serial = run_experiment(
            self._scenes(), ["mvdr-batch"], speech, noise, out_dir=None, jobs=1
        )
        parallel = run_experiment(
            self._scenes(), ["mvdr-batch"], speech, noise, out_dir=None, jobs=2
        )
        assert serial.to_csv() == parallel.to_csv()

    def test_all_scenes_failing_raises(self, tmp_path):
        stereo_dir = tmp_path / "stereo"
        stereo_dir.mkdir()
        save_wav(stereo_dir / "bad.wav", TimeSignal(np.zeros((2, 8000))))
        with pytest.raises(ExperimentError):
            run_experiment(
                self._scenes(n=1), ["passthrough"], stereo_dir, stereo_dir,
                out_dir=None,
            )

    def test_unknown_mode_rejected(self, corpora):
        speech, noise = corpora
        with pytest.raises(ExperimentError):
            run_experiment(self._scenes(n=1), ["wiener"], speech, noise)

    def test_empty_corpus_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ExperimentError):
            run_experiment(self._scenes(n=1), ["passthrough"], empty, empty)


def test_export_report_standalone(tmp_path):
    from beamlab.harness import ExperimentReport, ReportRow

    report = ExperimentReport(
        rows=[
            ReportRow(
                scene_id=0, mode="passthrough", sir_db=0.0, moving=False,
                si_snr_in=1.0, si_snr_out=2.0, stoi_in=0.5, stoi_out=0.6,
                mse_term=0.1, snr_term=0.2, total_loss=0.3, flagged_bins=4,
            )
        ],
        attention={"scene0000_x_attention_speech": np.eye(3)},
    )
    paths = export_report(report, tmp_path)
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "scene0000_x_attention_speech.bin").exists()
    assert len(paths) == 2
