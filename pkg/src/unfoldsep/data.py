"""Synthetic two-"speaker" mixtures and their on-disk layout.

Each source is a harmonic complex whose fundamental follows a bounded
log-frequency random walk, shaped by a syllable-rate amplitude envelope and
topped with broadband noise at 1% of its RMS.  The two sources of a mixture
draw fundamentals from disjoint ranges.  Sources are rounded to the 16-bit
grid before summing, so ``mixture == sum(sources)`` holds exactly both in
memory and after a WAV round trip.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import Waveform
from .errors import InputError
from .wavio import quantize, read_wav, write_wav

MANIFEST = "manifest.jsonl"


@dataclass(frozen=True)
class GenConfig:
    sample_rate: int = 8000
    min_duration: float = 2.0
    max_duration: float = 4.0
    gain_db: float = 2.5
    f0_ranges: tuple = ((80.0, 160.0), (160.0, 300.0))
    min_harmonics: int = 3
    max_harmonics: int = 8
    noise_level: float = 0.01
    rms: float = 0.08
    control_rate: float = 100.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["f0_ranges"] = [list(r) for r in self.f0_ranges]
        return d


@dataclass
class SeparationBatch:
    mixture: Waveform
    sources: list
    id: str = ""
    snr_offset: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.mixture)
        if any(len(s) != n for s in self.sources):
            raise InputError(f"{self.id}: sources and mixture differ in length")

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def source_array(self) -> np.ndarray:
        return np.stack([s.samples for s in self.sources])

    def crop(self, start: int, length: int) -> "SeparationBatch":
        sl = slice(start, start + length)
        rate = self.mixture.sample_rate
        return SeparationBatch(
            Waveform(self.mixture.samples[sl], rate),
            [Waveform(s.samples[sl], rate) for s in self.sources],
            self.id,
            self.snr_offset,
            dict(self.meta, crop=[start, length]),
        )


def _random_walk_f0(rng, n_ctrl, lo, hi):
    log_lo, log_hi = np.log(lo), np.log(hi)
    out = np.empty(n_ctrl)
    value = rng.uniform(log_lo, log_hi)
    step = rng.uniform(0.005, 0.02)
    for i in range(n_ctrl):
        value += step * rng.standard_normal()
        # reflect at the range edges
        if value < log_lo:
            value = 2 * log_lo - value
        elif value > log_hi:
            value = 2 * log_hi - value
        out[i] = value
    return np.exp(out)


def synth_speaker(rng, n_samples: int, f0_range, config: GenConfig) -> np.ndarray:
    """One synthetic voice: harmonic complex + envelope + 1% noise, unit RMS."""
    rate = config.sample_rate
    t = np.arange(n_samples) / rate
    n_ctrl = int(np.ceil(n_samples / rate * config.control_rate)) + 2
    f0_ctrl = _random_walk_f0(rng, n_ctrl, *f0_range)
    f0 = np.interp(t, np.arange(n_ctrl) / config.control_rate, f0_ctrl)
    phase = 2 * np.pi * np.cumsum(f0) / rate

    n_harm = int(rng.integers(config.min_harmonics, config.max_harmonics + 1))
    decay = rng.uniform(0.5, 0.85)
    amps = decay ** np.arange(n_harm) * rng.uniform(0.7, 1.0, n_harm)
    offsets = rng.uniform(0, 2 * np.pi, n_harm)
    voiced = np.zeros(n_samples)
    for h in range(n_harm):
        # drop harmonics that would alias
        alive = (h + 1) * f0 < 0.45 * rate
        voiced += alive * amps[h] * np.sin((h + 1) * phase + offsets[h])

    am_rate = rng.uniform(2.0, 5.0)
    env = (0.5 - 0.5 * np.cos(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))) ** 1.5
    voiced *= env
    voiced /= np.sqrt(np.mean(voiced**2)) + 1e-12
    noise = rng.standard_normal(n_samples)
    noise *= config.noise_level / np.sqrt(np.mean(noise**2))
    out = voiced + noise
    return out / np.sqrt(np.mean(out**2))


def make_mixture(rng, index: int, config: GenConfig, seed=None) -> SeparationBatch:
    rate = config.sample_rate
    duration = rng.uniform(config.min_duration, config.max_duration)
    n = int(round(duration * rate))
    ranges = list(config.f0_ranges)
    if rng.random() < 0.5:
        ranges.reverse()
    gain = rng.uniform(-config.gain_db, config.gain_db)
    raw = [synth_speaker(rng, n, r, config) for r in ranges]
    scales = [config.rms * 10 ** (gain / 40), config.rms * 10 ** (-gain / 40)]
    scaled = [s * g for s, g in zip(raw, scales)]
    peak = np.max(np.abs(scaled[0] + scaled[1]))
    if peak > 0.95:
        scaled = [s * (0.95 / peak) for s in scaled]
    sources = [quantize(s) for s in scaled]
    mixture = sources[0] + sources[1]
    return SeparationBatch(
        Waveform(mixture, rate),
        [Waveform(s, rate) for s in sources],
        id=f"mix{index:04d}",
        snr_offset=float(gain),
        meta={"seed": seed, "index": index, "f0_ranges": [list(r) for r in ranges]},
    )


def gen_dataset(n: int, seed: int = 0, config: GenConfig | None = None):
    """Generate ``n`` mixtures; returns ``(batches, manifest_records)``."""
    if n <= 0:
        raise InputError("n must be positive")
    config = config or GenConfig()
    children = np.random.SeedSequence(seed).spawn(n)
    batches = [make_mixture(np.random.default_rng(c), i, config, seed) for i, c in enumerate(children)]
    manifest = [
        {
            "id": b.id,
            "mixture": f"{b.id}_mix.wav",
            "sources": [f"{b.id}_s{c + 1}.wav" for c in range(b.n_sources)],
            "gain_db": round(b.snr_offset, 6),
            "seed": seed,
            "index": i,
            "n_samples": len(b.mixture),
        }
        for i, b in enumerate(batches)
    ]
    return batches, manifest


def save_dataset(batches, manifest, out_dir, config: GenConfig | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for b, rec in zip(batches, manifest):
        write_wav(out / rec["mixture"], b.mixture)
        for s, name in zip(b.sources, rec["sources"]):
            write_wav(out / name, s)
    with open(out / MANIFEST, "w") as f:
        for rec in manifest:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    if config is not None:
        (out / "gen_config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n")


def read_manifest(data_dir) -> list:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise InputError(f"no {MANIFEST} in {data_dir}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def load_dataset(data_dir) -> list:
    root = Path(data_dir)
    batches = []
    for rec in read_manifest(root):
        mix = read_wav(root / rec["mixture"])
        sources = [read_wav(root / s) for s in rec["sources"]]
        batches.append(SeparationBatch(mix, sources, rec["id"], rec.get("gain_db", 0.0), rec))
    return batches


def split(batches, holdout_fraction: float = 0.2):
    """Deterministic train/held-out split: the last fraction (by id) is held out."""
    ordered = sorted(batches, key=lambda b: b.id)
    n_hold = max(1, int(round(len(ordered) * holdout_fraction)))
    if n_hold >= len(ordered):
        raise InputError("not enough mixtures to hold any out")
    return ordered[:-n_hold], ordered[-n_hold:]
