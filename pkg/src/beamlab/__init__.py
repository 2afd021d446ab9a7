"""Desk-scale laboratory for mask-based and attention-weighted multichannel
speech enhancement: reverberant scene synthesis, oracle masks, spatial
covariance estimation, MVDR / GEV+BAN beamforming and objective metrics."""

from .attention import (
    ProjectorWeights,
    attend,
    attention_weights,
    iscm_features,
    load_features,
    project_features,
    save_features,
    softmax_jacobian,
)
from .beamforming import apply_weights, ban_gain, gev_weights, mvdr_weights
from .dsp import SAMPLE_RATE, Spectrogram, StftConfig, TimeSignal, istft, stft
from .masks import apply_mask, oracle_mask
from .metrics import LossReport, joint_loss, si_snr, stoi
from .pipeline import ENHANCE_MODES, EnhanceConfig, enhance
from .room import (
    ArrayGeometry,
    Rir,
    RoomSpec,
    Scene,
    Trajectory,
    make_uca,
    mix_scene,
    render_source,
    sample_scene,
    schroeder_rt60,
    simulate_rir,
)
from .scm import attend_scm, batch_scm, compute_iscm, psd_condition
from .signals import synth_noise, synth_speech

__version__ = "0.1.0"

__all__ = [
    "SAMPLE_RATE",
    "ArrayGeometry",
    "EnhanceConfig",
    "ENHANCE_MODES",
    "LossReport",
    "ProjectorWeights",
    "Rir",
    "RoomSpec",
    "Scene",
    "Spectrogram",
    "StftConfig",
    "TimeSignal",
    "Trajectory",
    "apply_mask",
    "apply_weights",
    "attend",
    "attend_scm",
    "attention_weights",
    "ban_gain",
    "batch_scm",
    "compute_iscm",
    "enhance",
    "gev_weights",
    "iscm_features",
    "istft",
    "joint_loss",
    "load_features",
    "make_uca",
    "mix_scene",
    "mvdr_weights",
    "oracle_mask",
    "project_features",
    "psd_condition",
    "render_source",
    "sample_scene",
    "save_features",
    "schroeder_rt60",
    "si_snr",
    "simulate_rir",
    "softmax_jacobian",
    "stft",
    "stoi",
    "synth_noise",
    "synth_speech",
]
