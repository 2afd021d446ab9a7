import math

import numpy as np
import pytest
from scipy.signal import fftconvolve

from beamlab.dsp import TimeSignal
from beamlab.room import (
    GAIN_FLOOR_M,
    SIR_GRID_DB,
    RoomError,
    RoomSpec,
    Trajectory,
    make_uca,
    mix_scene,
    render_source,
    sample_scene,
    schroeder_rt60,
    simulate_rir,
)
from beamlab.signals import synth_speech


class TestArrayGeometry:
    def test_four_mic_circle(self):
        arr = make_uca(4, 0.035, (0.0, 0.0, 0.0))
        az = np.degrees(np.arctan2(arr.mic_positions[:, 1], arr.mic_positions[:, 0]))
        np.testing.assert_allclose(np.mod(az, 360.0), [0.0, 90.0, 180.0, 270.0], atol=1e-9)
        dists = np.linalg.norm(arr.mic_positions, axis=1)
        np.testing.assert_allclose(dists, 0.035, atol=1e-12)

    def test_single_mic_at_center(self):
        arr = make_uca(1, 0.0, (1.0, 2.0, 3.0))
        np.testing.assert_allclose(arr.mic_positions, [[1.0, 2.0, 3.0]])

    def test_adjacent_spacing_matches_chord_formula(self):
        for m in (2, 3, 4, 8):
            arr = make_uca(m, 0.05, (0.0, 0.0, 0.0))
            expected = 2 * 0.05 * np.sin(np.pi / m)
            if m == 2:
                expected = 0.1  # antipodal pair
            spacing = np.linalg.norm(arr.mic_positions[0] - arr.mic_positions[1])
            assert abs(spacing - expected) < 1e-12

    def test_invalid_arrays(self):
        with pytest.raises(RoomError):
            make_uca(0, 0.035)
        with pytest.raises(RoomError):
            make_uca(4, -0.01)
        with pytest.raises(RoomError):
            make_uca(4, 0.0)  # coincident mics


class TestRoomSpec:
    def test_validation(self):
        with pytest.raises(RoomError):
            RoomSpec((6, -5, 3), 0.3)
        with pytest.raises(RoomError):
            RoomSpec((6, 5, 3), -1.0)
        with pytest.raises(RoomError):
            RoomSpec((6, 5, 3), 2.5)
        RoomSpec((6, 5, 3), 0.0)  # anechoic allowed


class TestSimulateRir:
    def test_anechoic_pulse_matches_direct_formula(self):
        room = RoomSpec((6, 5, 3), 0.0)
        arr = make_uca(1, 0.0, (2.0, 2.5, 1.2))
        rir = simulate_rir(room, (3.0, 2.5, 1.2), arr)  # 1 m away
        fs, c = 16000, 343.0
        tau = fs / c
        n = np.arange(rir.taps.shape[1])
        u = n - tau
        window = np.where(np.abs(u) <= 40.5, 0.5 * (1 + np.cos(2 * np.pi * u / 81)), 0.0)
        oracle = window * np.sinc(u) / max(1.0, GAIN_FLOOR_M)
        np.testing.assert_allclose(rir.taps[0], oracle, atol=1e-6)
        assert abs(rir.taps[0].argmax() - tau) <= 0.5

    def test_inverse_distance_law(self):
        # Integer-sample delays so the peak tap is the exact 1/d gain.
        room = RoomSpec((20, 6, 4), 0.0)
        arr = make_uca(1, 0.0, (1.0, 3.0, 2.0))
        d1 = 50 * 343.0 / 16000.0
        r1 = simulate_rir(room, (1.0 + d1, 3.0, 2.0), arr)
        r2 = simulate_rir(room, (1.0 + 2 * d1, 3.0, 2.0), arr)
        ratio = r1.taps[0].max() / r2.taps[0].max()
        assert abs(ratio - 2.0) < 1e-6

    def test_equidistant_mics_identical(self):
        room = RoomSpec((6, 5, 3), 0.0)
        arr = make_uca(2, 0.5, (3.0, 2.5, 1.2))  # mics at azimuth 0 and 180
        rir = simulate_rir(room, (3.0, 4.0, 1.2), arr)  # on the symmetry plane
        np.testing.assert_allclose(rir.taps[0], rir.taps[1], atol=1e-9)

    def test_source_outside_room_raises(self):
        room = RoomSpec((6, 5, 3), 0.2)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        with pytest.raises(RoomError):
            simulate_rir(room, (7.0, 2.5, 1.2), arr)

    def test_reverberant_decay_matches_target(self):
        room = RoomSpec((6, 5, 3), 0.3)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        rir = simulate_rir(room, (4.2, 2.9, 1.3), arr)
        est = schroeder_rt60(rir.taps[0])
        assert abs(est / 0.3 - 1.0) <= 0.2


class TestRenderSource:
    def test_static_equals_plain_convolution(self):
        rng = np.random.default_rng(5)
        dry = TimeSignal(rng.standard_normal((1, 4000)))
        room = RoomSpec((6, 5, 3), 0.22)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        point = (4.0, 3.0, 1.2)
        out = render_source(dry, Trajectory(point, point, 0.25), room, arr)
        rir = simulate_rir(room, point, arr)
        ref = fftconvolve(dry.samples, rir.taps, mode="full", axes=-1)
        np.testing.assert_allclose(out.samples, ref, atol=1e-9)

    def test_unit_impulse_returns_taps(self):
        dry = TimeSignal(np.array([[1.0]]))
        room = RoomSpec((6, 5, 3), 0.2)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        point = (4.0, 3.0, 1.2)
        out = render_source(dry, Trajectory(point, point, 1.0), room, arr)
        rir = simulate_rir(room, point, arr)
        np.testing.assert_allclose(out.samples, rir.taps, atol=1e-12)

    def test_moving_no_block_boundary_discontinuity(self):
        fs = 16000
        t = np.arange(int(0.3 * fs)) / fs
        dry = TimeSignal((0.5 * np.sin(2 * np.pi * 320 * t))[None, :])
        room = RoomSpec((5, 4, 3), 0.2)
        arr = make_uca(4, 0.035, (2.5, 2.0, 1.2))
        rng = np.random.default_rng(99)
        for _ in range(20):
            az0, az1 = rng.uniform(-15, 15, 2)
            d0, d1 = rng.uniform(0.6, 1.6, 2)
            p0 = (2.5 + d0 * math.cos(math.radians(az0)),
                  2.0 + d0 * math.sin(math.radians(az0)), 1.2)
            p1 = (2.5 + d1 * math.cos(math.radians(az1)),
                  2.0 + d1 * math.sin(math.radians(az1)), 1.2)
            moving = render_source(dry, Trajectory(p0, p1, 0.3), room, arr)
            static = render_source(dry, Trajectory(p0, p0, 0.3), room, arr)
            jump_moving = np.max(np.abs(np.diff(moving.samples, axis=1)))
            jump_static = np.max(np.abs(np.diff(static.samples, axis=1)))
            assert jump_moving <= 10.0 * jump_static

    def test_trajectory_outside_room_raises(self):
        dry = TimeSignal(np.zeros((1, 1600)))
        room = RoomSpec((6, 5, 3), 0.2)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        with pytest.raises(RoomError):
            render_source(dry, Trajectory((4, 3, 1.2), (8, 3, 1.2), 0.1), room, arr)

    def test_mono_and_duration_preconditions(self):
        room = RoomSpec((6, 5, 3), 0.2)
        arr = make_uca(4, 0.035, (3.0, 2.5, 1.2))
        with pytest.raises(RoomError):
            render_source(
                TimeSignal(np.zeros((2, 1600))),
                Trajectory((4, 3, 1.2), (4, 3, 1.2), 1.0), room, arr,
            )
        with pytest.raises(RoomError):
            render_source(
                TimeSignal(np.zeros((1, 16000))),
                Trajectory((4, 3, 1.2), (4, 3, 1.2), 0.5), room, arr,
            )


class TestMixScene:
    def test_realized_sir_exact(self):
        scene = sample_scene(3, duration=0.6, sensor_snr_db=None)
        rng = np.random.default_rng(1)
        target = TimeSignal(rng.standard_normal((1, 9600)))
        interferer = TimeSignal(rng.standard_normal((1, 9600)))
        mixture, clean = mix_scene(scene, target, [interferer])
        residual = mixture.samples[0] - clean.samples[0]
        realized = 10 * np.log10(np.mean(clean.samples[0] ** 2) / np.mean(residual**2))
        assert abs(realized - scene.sir_db[0]) < 1e-9

    def test_realized_sensor_snr_exact_and_in_range(self):
        scene = sample_scene(5, duration=0.6, n_interferers=0)
        rng = np.random.default_rng(2)
        target = TimeSignal(rng.standard_normal((1, 9600)))
        mixture, clean = mix_scene(scene, target, [])
        noise = mixture.samples - clean.samples
        drawn = np.random.default_rng([scene.seed, 0x5EED]).uniform(30.0, 40.0, 4)
        for m in range(4):
            realized = 10 * np.log10(
                np.mean(clean.samples[m] ** 2) / np.mean(noise[m] ** 2)
            )
            assert 30.0 <= realized <= 40.0
            assert abs(realized - drawn[m]) < 1e-9

    def test_sir_grid_accepted(self):
        for sir in SIR_GRID_DB:
            scene = sample_scene(7, duration=0.4)
            scene = type(scene)(
                room=scene.room, array=scene.array, target=scene.target,
                interferers=scene.interferers, sir_db=(sir,),
                sensor_snr_db=scene.sensor_snr_db, seed=scene.seed,
            )
            rng = np.random.default_rng(4)
            mix_scene(
                scene,
                TimeSignal(rng.standard_normal((1, 6400))),
                [TimeSignal(rng.standard_normal((1, 6400)))],
            )

    def test_same_seed_bit_identical(self):
        scene = sample_scene(9, duration=0.5)
        target = synth_speech(1, 0.5)
        interferer = synth_speech(2, 0.5)
        a, _ = mix_scene(scene, target, [interferer])
        b, _ = mix_scene(scene, target, [interferer])
        assert np.array_equal(a.samples, b.samples)

    def test_silent_target_raises(self):
        scene = sample_scene(11, duration=0.4)
        with pytest.raises(RoomError):
            mix_scene(
                scene,
                TimeSignal(np.zeros((1, 6400))),
                [TimeSignal(np.ones((1, 6400)))],
            )


class TestSampleScene:
    def test_protocol_ranges(self):
        az_all, dist_all = [], []
        for seed in range(300):
            scene = sample_scene(seed, moving=(seed % 2 == 0), duration=1.0)
            center = scene.array.center
            for point in {scene.target.start, scene.target.end}:
                delta = np.asarray(point) - center
                az_all.append(math.degrees(math.atan2(delta[1], delta[0])))
                dist_all.append(np.linalg.norm(delta))
            assert 0.2 <= scene.room.rt60 <= 0.5
            assert scene.sir_db[0] in SIR_GRID_DB
        az_all = np.asarray(az_all)
        dist_all = np.asarray(dist_all)
        assert np.all(az_all >= -15.0 - 1e-9) and np.all(az_all <= 15.0 + 1e-9)
        assert np.all(dist_all >= 0.5 - 1e-9) and np.all(dist_all <= 2.1 + 1e-9)

    def test_static_target_closer_than_interferer(self):
        for seed in range(100):
            scene = sample_scene(seed, moving=False, duration=1.0)
            center = scene.array.center
            t_dist = np.linalg.norm(np.asarray(scene.target.start) - center)
            for pos in scene.interferers:
                assert np.linalg.norm(np.asarray(pos) - center) > t_dist

    def test_fixed_seed_identical(self):
        a = sample_scene(123, duration=1.0)
        b = sample_scene(123, duration=1.0)
        assert a.room == b.room
        assert np.array_equal(a.array.mic_positions, b.array.mic_positions)
        assert a.target == b.target
        assert a.interferers == b.interferers
        assert a.sir_db == b.sir_db
        assert a.sensor_snr_db == b.sensor_snr_db

    def test_moving_flag(self):
        assert sample_scene(5, moving=False, duration=1.0).target.is_static
        assert not sample_scene(5, moving=True, duration=1.0).target.is_static
