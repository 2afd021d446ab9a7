"""End-to-end enhancement: masks -> SCMs -> attention -> beamformer -> synthesis.

Oracle masks computed from the clean target image define the operating
point: this is the standard upper-bound protocol for evaluating the
beamforming math without a trained mask estimator. The noise reference is
the mixture minus the clean target image at the reference channel, so it
contains interferers, their reverberant tails and sensor noise.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import attention as att
from .beamforming import apply_weights, ban_gain, gev_weights, mvdr_weights
from .dsp import Spectrogram, StftConfig, TimeSignal, istft, stft
from .masks import MASK_MODES, oracle_mask
from .scm import attend_scm, batch_scm, compute_iscm

ENHANCE_MODES = (
    "passthrough",
    "mvdr-batch",
    "mvdr-tv-uniform",
    "mvdr-tv-iscmqk",
    "mvdr-tv-featfile",
    "gev-ban",
)


class PipelineError(ValueError):
    """Raised for invalid enhancement configurations or inputs."""


@dataclass(frozen=True)
class EnhanceConfig:
    """Which beamforming route to run and with what knobs."""

    mode: str = "mvdr-batch"
    mask_mode: str = "wlm"
    ref_channel: int = 0
    diag_loading: float = 1e-6
    separate_noise_attention: bool = True
    feature_file: Optional[str] = None
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.mode not in ENHANCE_MODES:
            raise PipelineError(
                f"mode must be one of {ENHANCE_MODES}, got {self.mode!r}"
            )
        if self.mask_mode.lower() not in MASK_MODES:
            raise PipelineError(f"unknown mask mode {self.mask_mode!r}")
        if (self.feature_file is not None) != (self.mode == "mvdr-tv-featfile"):
            raise PipelineError(
                "feature_file must be given exactly when mode is mvdr-tv-featfile"
            )


def _fit_length(sig: TimeSignal, n: int) -> TimeSignal:
    x = sig.samples
    if x.shape[1] >= n:
        return TimeSignal(x[:, :n], sig.sample_rate)
    pad = np.zeros((x.shape[0], n - x.shape[1]))
    return TimeSignal(np.concatenate([x, pad], axis=1), sig.sample_rate)


def enhance(mixture: TimeSignal, clean_ref: TimeSignal, cfg: EnhanceConfig):
    """Enhance a multichannel mixture toward the clean reference image.

    Returns ``(enhanced, artifacts)``: a single-channel signal of the same
    length as the input, and a dict holding the oracle masks, the attention
    matrices actually used (None for non-attention modes) and the
    degenerate-bin diagnostics from the beamformer.
    """
    if mixture.n_samples != clean_ref.n_samples:
        raise PipelineError(
            f"mixture ({mixture.n_samples}) and clean reference "
            f"({clean_ref.n_samples}) lengths differ"
        )
    if mixture.n_channels != clean_ref.n_channels:
        raise PipelineError("mixture and clean reference channel counts differ")
    ref = cfg.ref_channel
    if not 0 <= ref < mixture.n_channels:
        raise PipelineError(f"reference channel {ref} out of range")

    spec = stft(mixture, cfg.stft)

    if cfg.mode == "passthrough":
        out = istft(spec.channel(ref))
        return _fit_length(out, mixture.n_samples), {
            "mask_speech": None,
            "mask_noise": None,
            "attention_speech": None,
            "attention_noise": None,
            "flagged": np.zeros(spec.n_bins, dtype=bool),
            "flagged_count": 0,
        }

    target_ref = stft(clean_ref, cfg.stft).channel(ref)
    noise_ref = Spectrogram(
        spec.values[ref] - target_ref.values[0], cfg.stft
    )
    mask_s, mask_n = oracle_mask(target_ref, noise_ref, cfg.mask_mode)

    attention_s = attention_n = None
    if cfg.mode == "mvdr-batch":
        phi_x, _ = batch_scm(spec, mask_s)
        phi_n, _ = batch_scm(spec, mask_n)
        weights, flagged = mvdr_weights(phi_x, phi_n, ref, cfg.diag_loading)
        out_spec = apply_weights(weights, spec)
    elif cfg.mode == "gev-ban":
        phi_x, _ = batch_scm(spec, mask_s)
        phi_n, _ = batch_scm(spec, mask_n)
        weights, flagged = gev_weights(phi_x, phi_n, ref, cfg.diag_loading)
        gain = ban_gain(weights, phi_n)
        out_spec = apply_weights(weights, spec)
        out_spec = Spectrogram(out_spec.values * gain[None, None, :], cfg.stft)
    else:
        iscm_s = compute_iscm(spec, mask_s)
        iscm_n = compute_iscm(spec, mask_n)
        n_frames = spec.n_frames
        if cfg.mode == "mvdr-tv-uniform":
            attention_s = np.full((n_frames, n_frames), 1.0 / n_frames)
            attention_n = attention_s
        elif cfg.mode == "mvdr-tv-iscmqk":
            feats_s = att.iscm_features(iscm_s)
            attention_s = att.attention_weights(feats_s, feats_s)
            if cfg.separate_noise_attention:
                feats_n = att.iscm_features(iscm_n)
                attention_n = att.attention_weights(feats_n, feats_n)
            else:
                attention_n = attention_s
        else:  # mvdr-tv-featfile
            feats = att.load_features(cfg.feature_file)
            if feats.shape[0] != n_frames:
                raise PipelineError(
                    f"feature file has {feats.shape[0]} frames, spectrogram "
                    f"has {n_frames}"
                )
            attention_s = att.attention_weights(feats, feats)
            attention_n = attention_s
        phi_x = attend_scm(iscm_s, attention_s)
        phi_n = attend_scm(iscm_n, attention_n)
        weights, flagged = mvdr_weights(phi_x, phi_n, ref, cfg.diag_loading)
        out_spec = apply_weights(weights, spec)

    out = istft(out_spec)
    artifacts = {
        "mask_speech": mask_s,
        "mask_noise": mask_n,
        "attention_speech": attention_s,
        "attention_noise": attention_n,
        "flagged": flagged,
        "flagged_count": int(np.count_nonzero(flagged)),
    }
    return _fit_length(out, mixture.n_samples), artifacts
