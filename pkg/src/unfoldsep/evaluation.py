"""SI-SDR scoring, oracle-mask experiments and MISI iteration sweeps."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import StftConfig, Waveform, stft_array
from .errors import InputError
from .masks import oracle_masks
from .model import MaskerNet, estimate_masks
from .phase import misi, misi_step
from .wavio import read_wav

SISDR_CAP = 60.0
CSV_COLUMNS = ("name", "eval_k", "mean_sisdr_db", "std_db", "n")


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, capped at 60 dB."""
    est, ref = _samples(est), _samples(ref)
    if est.shape != ref.shape:
        raise InputError(f"length mismatch: {est.shape} vs {ref.shape}")
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise InputError("reference signal is all zeros")
    target = (np.dot(est, ref) / ref_energy) * ref
    signal = np.dot(target, target)
    noise = np.sum((target - est) ** 2)
    if signal == 0:
        return -SISDR_CAP
    if noise <= 1e-12 * signal:
        return SISDR_CAP
    return float(min(10.0 * np.log10(signal / noise), SISDR_CAP))


def eval_pair(estimates, references):
    """Best-permutation mean SI-SDR.

    Returns ``(score, perm)`` where ``estimates[perm[c]]`` is matched to
    ``references[c]``.
    """
    estimates = [_samples(e) for e in estimates]
    references = [_samples(r) for r in references]
    if len(estimates) != len(references):
        raise InputError(f"{len(estimates)} estimates vs {len(references)} references")
    if len(references) > 4:
        raise InputError("at most 4 sources are supported")
    n = len(references)
    table = np.array([[si_sdr(e, r) for r in references] for e in estimates])
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        score = np.mean([table[perm[c], c] for c in range(n)])
        if score > best:
            best, best_perm = score, perm
    return float(best), best_perm


@dataclass
class ReportRow:
    name: str
    eval_k: int
    mean_sisdr_db: float
    std_db: float
    n: int


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, name, eval_k, scores):
        scores = np.asarray(scores, dtype=np.float64)
        self.rows.append(
            ReportRow(name, int(eval_k), float(scores.mean()), float(scores.std()), int(scores.size))
        )

    def lookup(self, name, eval_k) -> ReportRow:
        for row in self.rows:
            if row.name == name and row.eval_k == eval_k:
                return row
        raise KeyError((name, eval_k))

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([r.name, r.eval_k, f"{r.mean_sisdr_db:.6f}", f"{r.std_db:.6f}", r.n])
        if self.metadata:
            meta_path = path.with_suffix(path.suffix + ".meta.json")
            meta_path.write_text(json.dumps(self.metadata, sort_keys=True, indent=1) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ExperimentReport":
        report = cls()
        with open(path, newline="") as f:
            for rec in csv.DictReader(f):
                report.rows.append(
                    ReportRow(rec["name"], int(rec["eval_k"]), float(rec["mean_sisdr_db"]),
                              float(rec["std_db"]), int(rec["n"]))
                )
        return report


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _ordered(dataset):
    return sorted(dataset, key=lambda b: b.id)


def oracle_scores(dataset, mask_kind, k_list, gamma: float = 2.0, config: StftConfig | None = None):
    """Per-mixture best-permutation SI-SDR for one oracle mask at each K."""
    config = config or StftConfig()
    k_list = sorted(set(int(k) for k in k_list))
    scores = {k: [] for k in k_list}
    for batch in _ordered(dataset):
        x = batch.mixture.samples
        mix_spec = stft_array(x, config)
        src_specs = [stft_array(s.samples, config) for s in batch.sources]
        masks = oracle_masks(mask_kind, src_specs, mix_spec, gamma).masks
        mags = masks * np.abs(mix_spec)
        state = misi(x, mags, np.angle(mix_spec), 0, config, return_state=True)
        done = 0
        for k in k_list:
            while done < k:
                state = misi_step(state, config)
                done += 1
            scores[k].append(eval_pair(state.signals, batch.sources)[0])
    return scores


def oracle_experiment(dataset, k_list=(0, 5), masks=("ibm", "mrm", "iam", "psm"), gamma: float = 2.0,
                      config: StftConfig | None = None) -> ExperimentReport:
    """Oracle mask -> MISI(K) -> best-permutation SI-SDR, for each mask and K."""
    if not dataset:
        raise InputError("dataset is empty")
    config = config or StftConfig()
    report = ExperimentReport(
        metadata={
            "n_mixtures": len(dataset),
            "ids": [b.id for b in _ordered(dataset)],
            "gamma": gamma,
            "config_hash": config_hash({"stft": config.to_dict(), "gamma": gamma}),
        }
    )
    for kind in masks:
        scores = oracle_scores(dataset, kind, k_list, gamma, config)
        for k in sorted(scores):
            report.add(kind, k, scores[k])
    return report


def misi_sweep(checkpoints: dict, dataset, k_values=range(6)) -> ExperimentReport:
    """SI-SDR of each trained network against the number of test-time MISI iterations.

    ``checkpoints`` maps a name to a :class:`MaskerNet`; one row is produced
    per (name, K).
    """
    if not dataset:
        raise InputError("dataset is empty")
    k_values = sorted(set(int(k) for k in k_values))
    report = ExperimentReport(metadata={"n_mixtures": len(dataset), "ids": [b.id for b in _ordered(dataset)]})
    for name in checkpoints:
        net: MaskerNet = checkpoints[name]
        config = net.config.stft
        scores = {k: [] for k in k_values}
        for batch in _ordered(dataset):
            x = batch.mixture.samples
            mix_spec = stft_array(x, config)
            mags = estimate_masks(net, mix_spec) * np.abs(mix_spec)
            state = misi(x, mags, np.angle(mix_spec), 0, config, return_state=True)
            for k in k_values:
                while state.iteration < k:
                    state = misi_step(state, config)
                scores[k].append(eval_pair(state.signals, batch.sources)[0])
        for k in k_values:
            report.add(name, k, scores[k])
    return report


def score_directories(est_dir, ref_dir) -> ExperimentReport:
    """Score ``<id>_s<c>.wav`` estimates against references with the same names.

    Every id with a full set of references in ``ref_dir`` must have estimates.
    """
    est_dir, ref_dir = Path(est_dir), Path(ref_dir)
    groups = {}
    for path in sorted(ref_dir.glob("*_s[0-9]*.wav")):
        stem, _, idx = path.stem.rpartition("_s")
        if idx.isdigit():
            groups.setdefault(stem, []).append(path.name)
    if not groups:
        raise InputError(f"no reference files in {ref_dir}")
    scores = []
    for stem in sorted(groups):
        names = sorted(groups[stem])
        missing = [n for n in names if not (est_dir / n).exists()]
        if missing:
            raise InputError(f"missing estimates in {est_dir}: {missing}")
        refs = [read_wav(ref_dir / n) for n in names]
        ests = [read_wav(est_dir / n) for n in names]
        scores.append(eval_pair(ests, refs)[0])
    report = ExperimentReport(metadata={"ids": sorted(groups)})
    report.add(est_dir.name or "estimates", 0, scores)
    return report
