"""Oracle T-F masks, mask application and mask output activations."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram
from .errors import ConfigError, InputError

MAG_FLOOR = 1e-12


class MaskKind(str, enum.Enum):
    IBM = "ibm"
    MRM = "mrm"
    IAM = "iam"
    PSM_TRUNCATED = "psm"
    ESTIMATED = "estimated"


class ActivationKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    DOUBLED_SIGMOID = "dsig"
    CLIPPED_RELU = "crelu"
    CONVEX_SOFTMAX = "csoftmax"

    @property
    def arity(self) -> int:
        """Logits per T-F unit and source."""
        return 3 if self is ActivationKind.CONVEX_SOFTMAX else 1

    @property
    def upper(self) -> float:
        return 1.0 if self is ActivationKind.SIGMOID else 2.0

    @property
    def default_gamma(self) -> float:
        # PSM truncation matched to the activation's range
        return self.upper


@dataclass
class MaskSet:
    masks: np.ndarray  # C x T x F
    kind: MaskKind = MaskKind.ESTIMATED

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.float64)
        if self.masks.ndim != 3:
            raise InputError("MaskSet expects a C x T x F array")

    def __len__(self):
        return self.masks.shape[0]

    def __getitem__(self, c):
        return self.masks[c]


def _data(s) -> np.ndarray:
    return s.data if isinstance(s, ComplexSpectrogram) else np.asarray(s)


def _stack_sources(sources) -> np.ndarray:
    arrays = [_data(s) for s in sources]
    if len(arrays) < 2:
        raise InputError("need at least two sources")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise InputError("source spectrograms differ in shape")
    return np.stack(arrays)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")


def ideal_binary_mask(sources) -> MaskSet:
    """1 for the dominant source at each unit; ties go to the lowest index."""
    mags = np.abs(_stack_sources(sources))
    winner = np.argmax(mags, axis=0)  # argmax returns the first maximum
    masks = (np.arange(mags.shape[0])[:, None, None] == winner).astype(np.float64)
    return MaskSet(masks, MaskKind.IBM)


def magnitude_ratio_mask(sources) -> MaskSet:
    """|S_c| / sum_c' |S_c'|, or 1/C where the denominator vanishes."""
    mags = np.abs(_stack_sources(sources))
    total = mags.sum(axis=0)
    silent = total < MAG_FLOOR
    masks = mags / np.where(silent, 1.0, total)
    masks[:, silent] = 1.0 / mags.shape[0]
    return MaskSet(masks, MaskKind.MRM)


def ideal_amplitude_mask(source, mixture) -> np.ndarray:
    """|S| / |X| with |X| floored at 1e-12.  Values may exceed one."""
    s, x = _data(source), _data(mixture)
    _check_pair(s, x)
    return np.abs(s) / np.maximum(np.abs(x), MAG_FLOOR)


def phase_sensitive_mask(source, mixture, gamma: float = 2.0) -> np.ndarray:
    """|S| cos(angle S - angle X) / |X|, truncated to [0, gamma]."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    s, x = _data(source), _data(mixture)
    _check_pair(s, x)
    # Re(S conj(X)) / |X|^2 == |S| cos(angle S - angle X) / |X|
    ratio = (s * np.conj(x)).real / np.maximum(np.abs(x), MAG_FLOOR) ** 2
    return np.clip(ratio, 0.0, gamma)


def psa_target(source, mixture, gamma: float) -> np.ndarray:
    """Truncated PSA target: clamp(|S| cos(angle S - angle X), 0, gamma |X|)."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    s, x = _data(source), _data(mixture)
    _check_pair(s, x)
    mag_x = np.abs(x)
    projected = (s * np.conj(x)).real / np.maximum(mag_x, MAG_FLOOR)
    return np.clip(projected, 0.0, gamma * mag_x)


def oracle_masks(kind, sources, mixture, gamma: float = 2.0) -> MaskSet:
    kind = MaskKind(kind)
    if kind is MaskKind.IBM:
        return ideal_binary_mask(sources)
    if kind is MaskKind.MRM:
        return magnitude_ratio_mask(sources)
    if kind is MaskKind.IAM:
        return MaskSet(np.stack([ideal_amplitude_mask(s, mixture) for s in sources]), kind)
    if kind is MaskKind.PSM_TRUNCATED:
        return MaskSet(
            np.stack([phase_sensitive_mask(s, mixture, gamma) for s in sources]), kind
        )
    raise ConfigError(f"{kind} is not an oracle mask")


def apply_mask(mask, mixture_magnitude) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    mixture_magnitude = np.asarray(mixture_magnitude, dtype=np.float64)
    _check_pair(mask, mixture_magnitude)
    if np.any(mask < 0):
        raise InputError("mask has negative entries")
    return mask * mixture_magnitude


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # exp(-|z|) never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax3(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


_CONVEX_LEVELS = np.array([0.0, 1.0, 2.0])


def activate(logits, kind) -> np.ndarray:
    """Map logits to mask values.

    For ``convex_softmax`` the last axis of ``logits`` must have length 3 and
    is consumed; for the other kinds the output has the logits' shape.
    """
    kind = ActivationKind(kind)
    logits = np.asarray(logits, dtype=np.float64)
    if kind is ActivationKind.CONVEX_SOFTMAX:
        if logits.ndim == 0 or logits.shape[-1] != 3:
            raise InputError("convex softmax needs 3 logits per unit")
        return softmax3(logits) @ _CONVEX_LEVELS
    if kind is ActivationKind.SIGMOID:
        return sigmoid(logits)
    if kind is ActivationKind.DOUBLED_SIGMOID:
        return 2.0 * sigmoid(logits)
    return np.clip(logits, 0.0, 2.0)
