"""Two-headed mask-inference network (deep-clustering head + mask head).

The recurrent body used for full-scale systems is replaced by a two-layer
tanh MLP over a +/-``context`` frame window of log-magnitude features.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ad
from .autograd import Tape
from .dsp import ComplexSpectrogram, StftConfig, Waveform, stft
from .errors import ConfigError, InputError
from .masks import ActivationKind
from .phase import misi

_MAGIC = b"UFSEPCKP"
_VERSION = 1
_LEVELS = np.array([0.0, 1.0, 2.0])


@dataclass(frozen=True)
class NetConfig:
    n_freq: int = 129
    hidden: int = 128
    context: int = 2
    emb_dim: int = 8
    n_src: int = 2
    activation: str = "sigmoid"
    feature_floor: float = 1e-7
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        ActivationKind(self.activation)
        if self.stft.n_freq != self.n_freq:
            raise ConfigError("n_freq does not match the STFT configuration")
        if min(self.hidden, self.emb_dim, self.n_src) <= 0 or self.context < 0:
            raise ConfigError("network sizes must be positive")

    @property
    def arity(self) -> int:
        return ActivationKind(self.activation).arity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stft"] = self.stft.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "NetConfig":
        d = dict(d)
        d["stft"] = StftConfig(**d["stft"])
        return cls(**d)


def param_shapes(cfg: NetConfig) -> dict:
    n_in = (2 * cfg.context + 1) * cfg.n_freq
    return {
        "w1": (n_in, cfg.hidden),
        "b1": (cfg.hidden,),
        "w2": (cfg.hidden, cfg.hidden),
        "b2": (cfg.hidden,),
        "w_mask": (cfg.hidden, cfg.n_src * cfg.n_freq * cfg.arity),
        "b_mask": (cfg.n_src * cfg.n_freq * cfg.arity,),
        "w_emb": (cfg.hidden, cfg.n_freq * cfg.emb_dim),
        "b_emb": (cfg.n_freq * cfg.emb_dim,),
    }


@dataclass
class MaskerNet:
    config: NetConfig
    params: dict

    @classmethod
    def init(cls, config: NetConfig, seed: int = 0, scale: float = 1.0) -> "MaskerNet":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            if len(shape) == 2:
                limit = scale * np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, shape)
            else:
                params[name] = np.zeros(shape)
        return cls(config, params)

    @classmethod
    def zeros(cls, config: NetConfig) -> "MaskerNet":
        return cls(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})

    def copy(self) -> "MaskerNet":
        return MaskerNet(self.config, {k: v.copy() for k, v in self.params.items()})

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def bind(self, tape: Tape) -> dict:
        """Place every parameter on ``tape`` as a trainable leaf."""
        return {k: tape.leaf(v, name=k) for k, v in self.params.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])


def features(mixture, cfg: NetConfig) -> np.ndarray:
    """Utterance-normalized log magnitudes with +/-context frames: T x (2c+1)F."""
    data = mixture.data if isinstance(mixture, ComplexSpectrogram) else np.asarray(mixture)
    if data.ndim != 2 or data.shape[1] != cfg.n_freq:
        raise InputError(f"expected T x {cfg.n_freq} spectrogram, got {data.shape}")
    logmag = np.log(np.abs(data) + cfg.feature_floor)
    logmag = (logmag - logmag.mean()) / (logmag.std() + 1e-8)
    n_frames = logmag.shape[0]
    padded = np.pad(logmag, ((cfg.context, cfg.context), (0, 0)), mode="edge")
    return np.concatenate(
        [padded[i : i + n_frames] for i in range(2 * cfg.context + 1)], axis=1
    )


def forward(net: MaskerNet, mixture, tape: Tape | None = None, params: dict | None = None,
            embeddings: bool = True):
    """Run both heads.

    Returns ``(V, masks)``: V is a TF x D node of unit-norm embeddings (None
    when ``embeddings`` is False) and masks a C x T x F node.  Pass
    ``params`` from :meth:`MaskerNet.bind` to differentiate w.r.t. weights.
    """
    cfg = net.config
    if tape is None:
        tape = params[next(iter(params))].tape if params else Tape()
    if params is None:
        params = {k: tape.constant(v) for k, v in net.params.items()}
    feats = tape.constant(features(mixture, cfg))
    n_frames = feats.shape[0]

    h = ad.tanh(feats @ params["w1"] + params["b1"])
    h = ad.tanh(h @ params["w2"] + params["b2"])

    logits = h @ params["w_mask"] + params["b_mask"]
    kind = ActivationKind(cfg.activation)
    if kind is ActivationKind.CONVEX_SOFTMAX:
        probs = ad.softmax3(ad.reshape(logits, (-1, 3)))
        values = probs @ _LEVELS
    elif kind is ActivationKind.SIGMOID:
        values = ad.sigmoid(logits)
    elif kind is ActivationKind.DOUBLED_SIGMOID:
        values = ad.sigmoid(logits) * 2.0
    else:
        values = ad.relu_clip(logits, 0.0, 2.0)
    masks = ad.transpose(ad.reshape(values, (n_frames, cfg.n_src, cfg.n_freq)), (1, 0, 2))

    v = None
    if embeddings:
        emb = ad.sigmoid(h @ params["w_emb"] + params["b_emb"])
        v = ad.normalize_rows(ad.reshape(emb, (n_frames * cfg.n_freq, cfg.emb_dim)))
    return v, masks


def estimate_masks(net: MaskerNet, mixture) -> np.ndarray:
    """Forward-only mask estimate, C x T x F."""
    return forward(net, mixture, embeddings=False)[1].value


def separate(net: MaskerNet, mixture, n_iter: int = 5) -> list:
    """Masks -> estimated magnitudes -> MISI(``n_iter``) from the mixture phase."""
    cfg = net.config.stft
    x = mixture if isinstance(mixture, Waveform) else Waveform(mixture, cfg.sample_rate)
    spec = stft(x, cfg)
    mags = estimate_masks(net, spec) * np.abs(spec.data)
    signals, _ = misi(x, mags, np.angle(spec.data), n_iter, cfg)
    return [Waveform(s, cfg.sample_rate) for s in signals]


def save_checkpoint(net: MaskerNet, path, meta: dict | None = None):
    """Binary container: magic, version, JSON header, raw float64 parameters.

    The output is a pure function of the parameters and metadata, so equal
    networks produce byte-identical files.
    """
    names = sorted(net.params)
    header = {
        "config": net.config.to_dict(),
        "params": [{"name": k, "shape": list(net.params[k].shape)} for k in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        for k in names:
            f.write(np.ascontiguousarray(net.params[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(net, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise InputError(f"{path}: not a checkpoint file")
    version, n = struct.unpack("<II", raw[8:16])
    if version != _VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + n])
    offset = 16 + n
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        params[entry["name"]] = np.frombuffer(raw, "<f8", size, offset).reshape(shape).copy()
        offset += 8 * size
    return MaskerNet(NetConfig.from_dict(header["config"]), params), header["meta"]
