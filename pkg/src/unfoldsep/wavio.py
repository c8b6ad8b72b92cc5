"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import Waveform
from .errors import InputError

_SCALE = 32768.0
_MAX = 1.0 - 2.0**-15


def quantize(samples) -> np.ndarray:
    """Round to the 16-bit grid the writer uses (clipped to [-1, 1 - 2^-15])."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, _MAX)
    return np.round(x * _SCALE) / _SCALE


def write_wav(path, w: Waveform | np.ndarray, sample_rate: int | None = None):
    if isinstance(w, Waveform):
        samples, rate = w.samples, w.sample_rate
    else:
        samples, rate = np.asarray(w, dtype=np.float64), sample_rate or 8000
    ints = (quantize(samples) * _SCALE).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(rate))
        f.writeframes(ints.tobytes())


def read_wav(path) -> Waveform:
    path = Path(path)
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise InputError(f"{path}: only mono files are supported")
        if f.getsampwidth() != 2:
            raise InputError(f"{path}: only 16-bit PCM is supported")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE
    return Waveform(samples, rate)
