"""STFT / iSTFT with perfect-reconstruction windowing.

All transforms here are linear maps between a real waveform of length ``L``
and a ``T x F`` complex spectrogram.  Besides the forward maps this module
exposes their exact adjoints (:func:`stft_adjoint`, :func:`istft_adjoint`),
which the differentiation engine uses as backward rules, and dense-matrix
versions of both transforms for small configurations.

Framing policy: the signal is zero-padded with ``win_len - hop`` samples on
both ends (plus whatever is needed on the right to complete the last frame),
so every original sample lies in the fully overlapped region.  iSTFT trims the
padding again, so ``istft(stft(x))`` has exactly ``len(x)`` samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputError

_DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters, in samples.

    The defaults give 32 ms windows, an 8 ms hop and a 256-point DFT at 8 kHz,
    i.e. 129 frequency bins.
    """

    win_len: int = 256
    hop: int = 64
    dft_size: int = 256
    sample_rate: int = 8000

    def __post_init__(self):
        for name in ("win_len", "hop", "dft_size", "sample_rate"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.win_len % self.hop:
            raise ConfigError(f"hop ({self.hop}) must divide win_len ({self.win_len})")
        if not self.hop <= self.win_len <= self.dft_size:
            raise ConfigError("need hop <= win_len <= dft_size")
        if self.dft_size % 2:
            raise ConfigError("dft_size must be even")

    @property
    def n_freq(self) -> int:
        return self.dft_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.win_len - self.hop

    def n_frames(self, length: int) -> int:
        """Number of frames produced for a signal of ``length`` samples."""
        if length <= 0:
            raise InputError("signal length must be positive")
        return math.ceil((length + 2 * self.pad - self.win_len) / self.hop) + 1

    def padded_length(self, length: int) -> int:
        return (self.n_frames(length) - 1) * self.hop + self.win_len

    def to_dict(self) -> dict:
        return {
            "win_len": int(self.win_len),
            "hop": int(self.hop),
            "dft_size": int(self.dft_size),
            "sample_rate": int(self.sample_rate),
        }


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("waveform must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise InputError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """A ``T x F`` complex STFT together with what is needed to invert it."""

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    original_length: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2 or data.shape[1] != self.config.n_freq:
            raise InputError(
                f"spectrogram must be T x {self.config.n_freq}, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InputError("spectrogram contains non-finite entries")
        if self.original_length is not None:
            expected = self.config.n_frames(self.original_length)
            if data.shape[0] != expected:
                raise InputError(
                    f"{data.shape[0]} frames inconsistent with length "
                    f"{self.original_length} (expected {expected})"
                )
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data) -> "ComplexSpectrogram":
        return ComplexSpectrogram(data, self.config, self.original_length)


@dataclass(frozen=True)
class WindowPair:
    analysis: np.ndarray
    synthesis: np.ndarray


@lru_cache(maxsize=32)
def make_windows(config: StftConfig) -> WindowPair:
    """Periodic square-root Hann analysis window and its WOLA synthesis dual.

    The returned arrays are read-only (results are cached per config).
    """
    n = np.arange(config.win_len)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / config.win_len)
    analysis = np.sqrt(hann)
    # sum of analysis^2 over all frames overlapping each offset (period = hop)
    energy = (analysis**2).reshape(-1, config.hop).sum(axis=0)
    denom = np.maximum(np.tile(energy, config.win_len // config.hop), _DENOM_FLOOR)
    synthesis = analysis / denom
    analysis.flags.writeable = False
    synthesis.flags.writeable = False
    return WindowPair(analysis=analysis, synthesis=synthesis)


def _as_samples(w, config: StftConfig) -> np.ndarray:
    if isinstance(w, Waveform):
        if w.sample_rate != config.sample_rate:
            raise InputError(
                f"sample rate {w.sample_rate} does not match config {config.sample_rate}"
            )
        return w.samples
    x = np.asarray(w, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("expected a nonempty 1-D signal")
    return x


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Sum ``T x W`` frames spaced by ``hop`` (``hop`` must divide ``W``)."""
    n_frames, width = frames.shape
    out = np.zeros((n_frames - 1) * hop + width)
    for j in range(width // hop):
        out[j * hop : j * hop + n_frames * hop] += frames[:, j * hop : (j + 1) * hop].reshape(-1)
    return out


def _frame(padded: np.ndarray, config: StftConfig) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(padded, config.win_len)
    return view[:: config.hop]


def _pad(x: np.ndarray, config: StftConfig) -> np.ndarray:
    total = config.padded_length(x.size)
    out = np.zeros(total)
    out[config.pad : config.pad + x.size] = x
    return out


def _edge_weights(config: StftConfig) -> np.ndarray:
    # 1 at DC and Nyquist, 2 for the bins whose conjugate twin is dropped
    c = np.full(config.n_freq, 2.0)
    c[0] = c[-1] = 1.0
    return c


def stft_array(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """Complex ``T x F`` STFT of a plain sample array."""
    win = make_windows(config).analysis
    frames = _frame(_pad(x, config), config) * win
    return np.fft.rfft(frames, n=config.dft_size, axis=1)


def istft_array(data: np.ndarray, config: StftConfig, length: int) -> np.ndarray:
    """Inverse of :func:`stft_array`, trimmed to ``length`` samples."""
    if data.shape[0] != config.n_frames(length):
        raise InputError(f"{data.shape[0]} frames cannot produce {length} samples")
    win = make_windows(config).synthesis
    frames = np.fft.irfft(data, n=config.dft_size, axis=1)[:, : config.win_len] * win
    return _overlap_add(frames, config.hop)[config.pad : config.pad + length]


def stft_adjoint(grad: np.ndarray, config: StftConfig, length: int) -> np.ndarray:
    """Adjoint of ``x -> stft_array(x)`` under the real inner product.

    ``grad`` is complex ``T x F``; its real and imaginary parts are the
    cotangents of the real and imaginary planes of the STFT.
    """
    win = make_windows(config).analysis
    weights = np.full(config.n_freq, 0.5)
    weights[0] = weights[-1] = 1.0
    frames = config.dft_size * np.fft.irfft(grad * weights, n=config.dft_size, axis=1)
    frames = frames[:, : config.win_len] * win
    return _overlap_add(frames, config.hop)[config.pad : config.pad + length]


def istft_adjoint(grad: np.ndarray, config: StftConfig) -> np.ndarray:
    """Adjoint of ``Z -> istft_array(Z)``; returns a complex ``T x F`` cotangent."""
    win = make_windows(config).synthesis
    frames = _frame(_pad(grad, config), config) * win
    spec = np.fft.rfft(frames, n=config.dft_size, axis=1)
    return spec * (_edge_weights(config) / config.dft_size)


def stft_matrix(config: StftConfig, length: int) -> np.ndarray:
    """Dense complex ``(T*F) x length`` matrix of the STFT (rows in C order).

    Built from an explicit DFT matrix; intended for small configurations.
    """
    n_frames = config.n_frames(length)
    win = make_windows(config).analysis
    k = np.arange(config.n_freq)[:, None]
    n = np.arange(config.win_len)[None, :]
    dft = np.exp(-2j * np.pi * k * n / config.dft_size) * win
    mat = np.zeros((n_frames, config.n_freq, length), dtype=np.complex128)
    for t in range(n_frames):
        for j in range(config.win_len):
            src = t * config.hop + j - config.pad
            if 0 <= src < length:
                mat[t, :, src] += dft[:, j]
    return mat.reshape(n_frames * config.n_freq, length)


def istft_matrix(config: StftConfig, length: int) -> np.ndarray:
    """Dense real ``length x (T*F*2)`` matrix of the iSTFT.

    Columns index the stacked real/imag planes in C order, matching the
    ``T x F x 2`` layout used by the differentiation engine.
    """
    n_frames = config.n_frames(length)
    win = make_windows(config).synthesis
    c = _edge_weights(config)
    k = np.arange(config.n_freq)[None, :]
    n = np.arange(config.win_len)[:, None]
    theta = 2.0 * np.pi * k * n / config.dft_size
    # per-frame map from (Re, Im) planes to windowed time samples: win x F x 2
    block = np.stack([c * np.cos(theta), -c * np.sin(theta)], axis=-1)
    block = block / config.dft_size * win[:, None, None]
    mat = np.zeros((length, n_frames, config.n_freq, 2))
    for t in range(n_frames):
        for j in range(config.win_len):
            dst = t * config.hop + j - config.pad
            if 0 <= dst < length:
                mat[dst, t] += block[j]
    return mat.reshape(length, -1)


def stft(w, config: StftConfig | None = None, method: str = "fft") -> ComplexSpectrogram:
    """Short-time Fourier transform of a :class:`Waveform` (or sample array).

    ``method="dense"`` multiplies by :func:`stft_matrix` instead of using the FFT.
    """
    config = config or StftConfig()
    x = _as_samples(w, config)
    if method == "fft":
        data = stft_array(x, config)
    elif method == "dense":
        data = (stft_matrix(config, x.size) @ x).reshape(-1, config.n_freq)
    else:
        raise ConfigError(f"unknown STFT method {method!r}")
    return ComplexSpectrogram(data, config, x.size)


def istft(s: ComplexSpectrogram, method: str = "fft") -> Waveform:
    """Inverse STFT, trimmed to the spectrogram's recorded original length."""
    if s.original_length is None:
        raise InputError("spectrogram has no original_length; cannot invert")
    if method == "fft":
        x = istft_array(s.data, s.config, s.original_length)
    elif method == "dense":
        planes = np.stack([s.data.real, s.data.imag], axis=-1).reshape(-1)
        x = istft_matrix(s.config, s.original_length) @ planes
    else:
        raise ConfigError(f"unknown iSTFT method {method!r}")
    return Waveform(x, s.config.sample_rate)


def _data(s) -> np.ndarray:
    return s.data if isinstance(s, ComplexSpectrogram) else np.asarray(s)


def magnitude(s) -> np.ndarray:
    return np.abs(_data(s))


def phase(s) -> np.ndarray:
    """Phase in radians; zero-magnitude bins get phase 0."""
    return np.angle(_data(s))


def from_polar(mag, angle, like: ComplexSpectrogram | None = None):
    """Combine magnitude and phase.

    Returns a :class:`ComplexSpectrogram` carrying ``like``'s config and length
    when ``like`` is given, otherwise a plain complex array.
    """
    mag = np.asarray(mag, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    if mag.shape != angle.shape:
        raise InputError(f"magnitude {mag.shape} and phase {angle.shape} differ in shape")
    data = mag * np.exp(1j * angle)
    if like is None:
        return data
    if like.shape != data.shape:
        raise InputError("polar data does not match template spectrogram")
    return like.with_data(data)


def to_planes(data: np.ndarray) -> np.ndarray:
    """Complex ``T x F`` array -> real ``T x F x 2`` (real, imag) planes."""
    return np.stack([data.real, data.imag], axis=-1)


def from_planes(planes: np.ndarray) -> np.ndarray:
    return planes[..., 0] + 1j * planes[..., 1]
