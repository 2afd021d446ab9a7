"""Oracle time-frequency masks and mask application.

Masks are real arrays shaped (frames, bins) with values in [0, 1]. The
oracle masks stand in for a trained mask estimator: they are computed from
the ground-truth target and noise spectrograms at the reference channel.
"""

import numpy as np

from .dsp import Spectrogram

MASK_MODES = ("wlm", "irm", "ibm")


class MaskError(ValueError):
    """Raised for invalid mask shapes or modes."""


def oracle_mask(target_ref: Spectrogram, noise_ref: Spectrogram, mode="wlm"):
    """Speech and noise masks from ground-truth reference spectrograms.

    Modes: ``wlm`` is the power-domain Wiener mask |S|^2 / (|S|^2 + |N|^2),
    ``irm`` its square root, ``ibm`` the binary dominance mask (ties count
    as noise). The two masks swap the roles of target and noise; for wlm
    and ibm the noise mask is taken as the exact complement 1 - M_X (the
    symmetric division agrees only to rounding), so those modes sum to one
    bit-exactly while irm squares sum to one. Bins where both inputs
    vanish get 0.5 on both masks.

    Returns ``(mask_speech, mask_noise)`` as (frames, bins) arrays.
    """
    mode = mode.lower()
    if mode not in MASK_MODES:
        raise MaskError(f"mode must be one of {MASK_MODES}, got {mode!r}")
    if target_ref.n_channels != 1 or noise_ref.n_channels != 1:
        raise MaskError("oracle_mask expects single-channel spectrograms")
    if target_ref.values.shape != noise_ref.values.shape:
        raise MaskError(
            f"shape mismatch: {target_ref.values.shape} vs "
            f"{noise_ref.values.shape}"
        )

    p_s = np.abs(target_ref.values[0]) ** 2
    p_n = np.abs(noise_ref.values[0]) ** 2
    total = p_s + p_n
    dead = total == 0.0
    total[dead] = 1.0

    if mode == "ibm":
        mask_s = (p_s > p_n).astype(np.float64)
        mask_n = 1.0 - mask_s
    elif mode == "wlm":
        mask_s = p_s / total
        mask_n = 1.0 - mask_s
    else:
        mask_s = np.sqrt(p_s / total)
        mask_n = np.sqrt(p_n / total)

    mask_s[dead] = 0.5
    mask_n[dead] = 0.5
    return mask_s, mask_n


def apply_mask(spec: Spectrogram, mask: np.ndarray) -> Spectrogram:
    """Scale a spectrogram element-wise; the mask broadcasts over channels."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != spec.values.shape[1:]:
        raise MaskError(
            f"mask shape {mask.shape} does not match spectrogram frames/bins "
            f"{spec.values.shape[1:]}"
        )
    return Spectrogram(spec.values * mask[None, :, :], spec.config)
