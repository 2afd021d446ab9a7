import dataclasses

import numpy as np
import pytest

from beamlab.dsp import TimeSignal
from beamlab.room import RoomSpec, make_uca, mix_scene, sample_scene, simulate_rir
from beamlab.signals import synth_speech


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the image-source kernel once so timed checks stay honest."""
    room = RoomSpec((4.0, 3.0, 2.5), 0.0)
    array = make_uca(1, 0.0, (2.0, 1.5, 1.2))
    simulate_rir(room, (3.0, 1.5, 1.2), array)


@pytest.fixture(scope="session")
def static_scene_pair():
    """One synthesized 0 dB SIR static scene shared by pipeline-level tests."""
    scene = dataclasses.replace(sample_scene(42, moving=False, duration=1.5),
                                sir_db=(0.0,))
    target = synth_speech(420, 1.5)
    interferer = synth_speech(421, 1.5)
    mixture, clean = mix_scene(scene, target, [interferer])
    return scene, mixture, clean


def random_psd_pair(rng, n, scale_x=1.0, scale_n=1.0):
    """Random Hermitian PSD matrix pair, noise side well conditioned."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    phi_x = scale_x * (a @ a.conj().T)
    phi_n = scale_n * (b @ b.conj().T + 0.1 * np.eye(n))
    return phi_x, phi_n


def mono(x) -> TimeSignal:
    return TimeSignal(np.asarray(x)[None, :])
