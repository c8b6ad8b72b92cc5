"""Inference-time iterative phase reconstruction: MISI and Griffin-Lim."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import ComplexSpectrogram, StftConfig, Waveform, istft_array, stft_array
from .errors import ConfigError, InputError

DEFAULT_ITERS = 5


@dataclass
class MisiState:
    """Signals and phases of every source at iteration ``iteration``."""

    mixture: np.ndarray
    magnitudes: np.ndarray  # C x T x F, never modified
    signals: np.ndarray  # C x L
    phases: np.ndarray  # C x T x F
    iteration: int = 0
    residual_norms: list = field(default_factory=list)

    @property
    def n_sources(self) -> int:
        return self.magnitudes.shape[0]


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def _check_magnitudes(magnitudes, config: StftConfig, length: int) -> np.ndarray:
    mags = np.asarray(magnitudes, dtype=np.float64)
    if mags.ndim == 2:
        mags = mags[None]
    if mags.ndim != 3:
        raise InputError("magnitudes must be C x T x F")
    expected = (config.n_frames(length), config.n_freq)
    if mags.shape[1:] != expected:
        raise InputError(f"magnitudes {mags.shape[1:]} do not match signal frames {expected}")
    if np.any(mags < 0):
        raise InputError("magnitudes must be non-negative")
    return mags


def _polar(mag, angle):
    return mag * np.exp(1j * angle)


def misi_init(x, magnitudes, init_phase, config: StftConfig | None = None) -> MisiState:
    """Iteration 0: inverse STFT of each magnitude with the initial phase.

    ``init_phase`` is either one T x F matrix (typically the mixture phase)
    shared by all sources, or a C x T x F stack.
    """
    config = config or StftConfig()
    x = _samples(x)
    mags = _check_magnitudes(magnitudes, config, x.size)
    phases = np.broadcast_to(np.asarray(init_phase, dtype=np.float64), mags.shape).copy()
    signals = np.stack(
        [istft_array(_polar(a, p), config, x.size) for a, p in zip(mags, phases)]
    )
    return MisiState(x, mags, signals, phases, 0)


def misi_step(state: MisiState, config: StftConfig | None = None) -> MisiState:
    """One MISI iteration: distribute the mixture residual, re-estimate phases."""
    config = config or StftConfig()
    residual = state.mixture - state.signals.sum(axis=0)
    share = residual / state.n_sources
    phases = np.stack([np.angle(stft_array(s + share, config)) for s in state.signals])
    signals = np.stack(
        [istft_array(_polar(a, p), config, state.mixture.size) for a, p in zip(state.magnitudes, phases)]
    )
    norms = state.residual_norms + [float(np.linalg.norm(residual))]
    return MisiState(state.mixture, state.magnitudes, signals, phases, state.iteration + 1, norms)


def misi(x, magnitudes, init_phase, n_iter: int = DEFAULT_ITERS, config: StftConfig | None = None,
         return_state: bool = False):
    """Multiple-input spectrogram inversion.

    Parameters
    ----------
    x : Waveform or array
        The mixture signal the source estimates must add up to.
    magnitudes : array, C x T x F
        Fixed source magnitudes (e.g. mask times mixture magnitude).
    init_phase : array, T x F or C x T x F
        Starting phase, usually the mixture phase.
    n_iter : int
        Number of iterations; 0 only performs the initial resynthesis.

    Returns
    -------
    signals : array, C x L
    phases : array, C x T x F
        Phases used for the returned signals.
    """
    if n_iter < 0:
        raise ConfigError("n_iter must be >= 0")
    state = misi_init(x, magnitudes, init_phase, config)
    for _ in range(n_iter):
        state = misi_step(state, config)
    if return_state:
        return state
    return state.signals, state.phases


def griffin_lim(magnitude, init_phase, n_iter: int = DEFAULT_ITERS, length: int | None = None,
                config: StftConfig | None = None):
    """Classic single-signal Griffin-Lim; returns ``(signal, phase)``.

    ``length`` defaults to the largest signal length compatible with the
    frame count.
    """
    config = config or StftConfig()
    mag = np.asarray(magnitude, dtype=np.float64)
    phase = np.asarray(init_phase, dtype=np.float64)
    if mag.shape != phase.shape:
        raise InputError(f"magnitude {mag.shape} and phase {phase.shape} differ")
    if np.any(mag < 0):
        raise InputError("magnitude must be non-negative")
    if n_iter < 0:
        raise ConfigError("n_iter must be >= 0")
    if length is None:
        length = (mag.shape[0] - 1) * config.hop - config.win_len + 2 * config.hop
    signal = istft_array(_polar(mag, phase), config, length)
    for _ in range(n_iter):
        phase = np.angle(stft_array(signal, config))
        signal = istft_array(_polar(mag, phase), config, length)
    return signal, phase


def inconsistency(magnitude, angle, length: int | None = None, config: StftConfig | None = None) -> float:
    """Relative distance of ``magnitude * exp(j angle)`` from the set of valid STFTs.

    ||Z - STFT(iSTFT(Z))||_F / ||magnitude||_F; zero for a consistent pair.
    """
    if isinstance(magnitude, ComplexSpectrogram):
        raise InputError("pass magnitude and phase arrays, not a spectrogram")
    config = config or StftConfig()
    mag = np.asarray(magnitude, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    if mag.shape != angle.shape:
        raise InputError("magnitude and phase differ in shape")
    norm = np.linalg.norm(mag)
    if norm == 0:
        return 0.0
    if length is None:
        length = (mag.shape[0] - 1) * config.hop - config.win_len + 2 * config.hop
    z = _polar(mag, angle)
    projected = stft_array(istft_array(z, config, length), config)
    return float(np.linalg.norm(z - projected) / norm)
