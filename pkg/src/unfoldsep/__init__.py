"""Single-channel source separation by T-F masking, trained end to end
through unfolded multiple-input spectrogram inversion (MISI)."""

from .dsp import ComplexSpectrogram, StftConfig, Waveform, istft, stft
from .errors import (
    ConfigError,
    GraphError,
    InputError,
    NumericalError,
    SeparationError,
    TrainingError,
)
from .evaluation import eval_pair, si_sdr
from .masks import ActivationKind, MaskKind, MaskSet
from .model import MaskerNet, NetConfig, load_checkpoint, save_checkpoint, separate
from .phase import griffin_lim, misi

__all__ = [
    "ActivationKind",
    "ComplexSpectrogram",
    "ConfigError",
    "GraphError",
    "InputError",
    "MaskKind",
    "MaskSet",
    "MaskerNet",
    "NetConfig",
    "NumericalError",
    "SeparationError",
    "StftConfig",
    "TrainingError",
    "Waveform",
    "eval_pair",
    "griffin_lim",
    "istft",
    "load_checkpoint",
    "misi",
    "save_checkpoint",
    "separate",
    "si_sdr",
    "stft",
]

__version__ = "0.1.0"
