"""Adam training of :class:`MaskerNet` and the staged curriculum.

Stages run in this order, each starting from the previous stage's weights:
``chimera`` (deep clustering + tPSA), ``wa`` (waveform L1 with the mixture
phase), then ``wa-misi-1`` ... ``wa-misi-K`` (waveform L1 after k unfolded
MISI iterations).
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tape
from .data import SeparationBatch
from .dsp import stft
from .errors import ConfigError, TrainingError
from .evaluation import eval_pair
from .losses import dominant_labels, loss_chimera, loss_wa_misi
from .masks import ActivationKind
from .model import MaskerNet, forward, save_checkpoint, separate

log = logging.getLogger(__name__)

_STAGE_RE = re.compile(r"^(chimera|wa|wa-misi-(\d+))$")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    segment_frames: int = 100
    batch_size: int = 4
    chimera_epochs: int = 20
    wa_epochs: int = 10
    misi_epochs: int = 5
    seed: int = 0
    activation: str = "sigmoid"
    alpha: float = 0.975
    gamma: float | None = None  # None: 1 for sigmoid, 2 for the beyond-one activations
    k_max: int = 5
    val_every: int = 1

    def __post_init__(self):
        ActivationKind(self.activation)
        if min(self.lr, self.segment_frames, self.batch_size) <= 0:
            raise ConfigError("lr, segment_frames and batch_size must be positive")
        if min(self.chimera_epochs, self.wa_epochs, self.misi_epochs) < 0 or self.k_max < 0:
            raise ConfigError("epoch counts and k_max must be non-negative")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")

    @property
    def psa_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return ActivationKind(self.activation).default_gamma

    def to_dict(self) -> dict:
        return asdict(self)


def parse_stage(stage: str):
    """'chimera' -> ('chimera', 0); 'wa' -> ('wa', 0); 'wa-misi-3' -> ('wa-misi', 3)."""
    m = _STAGE_RE.match(stage)
    if not m:
        raise ConfigError(f"unknown stage {stage!r}")
    if m.group(2) is not None:
        return "wa-misi", int(m.group(2))
    return stage, 0


def stage_names(k_max: int) -> list:
    return ["chimera", "wa"] + [f"wa-misi-{k}" for k in range(1, k_max + 1)]


def stage_epochs(stage: str, config: TrainConfig) -> int:
    kind, _ = parse_stage(stage)
    return {"chimera": config.chimera_epochs, "wa": config.wa_epochs}.get(kind, config.misi_epochs)


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def stage_loss(net: MaskerNet, batch: SeparationBatch, stage: str, config: TrainConfig,
               tape: Tape, params: dict, normalize: bool = True):
    """Loss node of one mixture for the given curriculum stage."""
    kind, k = parse_stage(stage)
    cfg = net.config.stft
    spec = stft(batch.mixture, cfg)
    use_dc = kind == "chimera" and config.alpha > 0
    v, masks = forward(net, spec, tape, params, embeddings=use_dc)
    if kind == "chimera":
        src_specs = [stft(s, cfg) for s in batch.sources]
        y = dominant_labels(src_specs) if use_dc else None
        return loss_chimera(config.alpha, v, y, masks, spec, src_specs, config.psa_gamma,
                            normalize=normalize)
    return loss_wa_misi(masks, batch.mixture, spec, batch.sources, k, normalize=normalize)


def loss_and_grads(net: MaskerNet, batches, stage: str, config: TrainConfig, normalize=True):
    """Mean loss over ``batches`` and its gradient w.r.t. every parameter."""
    tape = Tape()
    params = net.bind(tape)
    total = None
    for b in batches:
        loss = stage_loss(net, b, stage, config, tape, params, normalize)
        total = loss if total is None else total + loss
    total = total * (1.0 / len(batches))
    value = float(total.value)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss in stage {stage}: {value}")
    tape.backward(total)
    return value, {k: p.grad for k, p in params.items()}


def mean_sisdr(net: MaskerNet, dataset, n_iter: int) -> float:
    if not dataset:
        return float("nan")
    scores = [eval_pair(separate(net, b.mixture, n_iter), b.sources)[0]
              for b in sorted(dataset, key=lambda b: b.id)]
    return float(np.mean(scores))


def _crop(batch: SeparationBatch, n_samples: int, rng) -> SeparationBatch:
    length = len(batch.mixture)
    if length <= n_samples:
        return batch
    start = int(rng.integers(0, length - n_samples + 1))
    return batch.crop(start, n_samples)


def _stage_seed(config: TrainConfig, stage: str) -> list:
    return [config.seed, sum(ord(ch) * (i + 1) for i, ch in enumerate(stage))]


def train_stage(net: MaskerNet, train_set, stage: str, config: TrainConfig, val_set=None,
                epochs: int | None = None):
    """Train one curriculum stage on a copy of ``net``.

    Returns ``(new_net, curve)``; ``curve`` holds one dict per epoch with keys
    ``epoch, stage, train_loss, val_sisdr``.  Validation uses as many MISI
    iterations at test time as the stage unfolds.
    """
    _, k = parse_stage(stage)
    if not train_set:
        raise TrainingError("empty training set")
    epochs = stage_epochs(stage, config) if epochs is None else epochs
    net = net.copy()
    rng = np.random.default_rng(_stage_seed(config, stage))
    opt = Adam(net.params, config.lr, config.beta1, config.beta2, config.adam_eps)
    seg = config.segment_frames * net.config.stft.hop
    ordered = sorted(train_set, key=lambda b: b.id)
    curve = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(ordered))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [_crop(ordered[i], seg, rng) for i in order[start : start + config.batch_size]]
            value, grads = loss_and_grads(net, chunk, stage, config)
            opt.step(net.params, grads)
            losses.append(value)
        val = float("nan")
        if val_set and (epoch % config.val_every == 0 or epoch == epochs):
            val = mean_sisdr(net, val_set, k)
        row = {"epoch": epoch, "stage": stage, "train_loss": float(np.mean(losses)), "val_sisdr": val}
        log.info("%s epoch %d loss %.6f val %.3f dB", stage, epoch, row["train_loss"], val)
        curve.append(row)
    return net, curve


def write_curve(curve, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "stage", "train_loss", "val_sisdr"])
        for r in curve:
            writer.writerow([r["epoch"], r["stage"], f"{r['train_loss']:.9g}", f"{r['val_sisdr']:.6f}"])


@dataclass
class CurriculumResult:
    checkpoints: dict = field(default_factory=dict)  # stage -> MaskerNet
    curves: dict = field(default_factory=dict)  # stage -> list of rows


def curriculum(net: MaskerNet, train_set, config: TrainConfig, val_set=None, ckpt_dir=None,
               stages=None) -> CurriculumResult:
    """Run every stage in order, each initialized from the previous one."""
    stages = stages or stage_names(config.k_max)
    result = CurriculumResult()
    out = Path(ckpt_dir) if ckpt_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for stage in stages:
        net, curve = train_stage(net, train_set, stage, config, val_set)
        result.checkpoints[stage] = net
        result.curves[stage] = curve
        if out is not None:
            meta = {"stage": stage, "train_config": config.to_dict()}
            save_checkpoint(net, out / f"{stage}.ckpt", meta)
            write_curve(curve, out / f"{stage}_curve.csv")
    return result
