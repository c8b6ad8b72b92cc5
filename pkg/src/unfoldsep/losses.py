"""Training objectives: deep clustering, truncated PSA, chimera, WA and WA-MISI-K.

Mask-based losses take the estimated masks as a ``C x T x F`` node (a plain
array is accepted and placed on a fresh tape) and return a scalar node, so
the same code serves evaluation and backpropagation.  With
``normalize=True`` the permutation-minimum is divided by the number of
compared elements; the raw sum is the default.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .autograd import Node, Tape
from .dsp import ComplexSpectrogram, Waveform, to_planes
from .errors import ConfigError, InputError, NumericalError
from .masks import ideal_binary_mask, psa_target

MAX_SOURCES = 4
DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.975
    gamma: float = 1.0
    misi_iters: int = 0
    n_sources: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.misi_iters < 0:
            raise ConfigError("misi_iters must be >= 0")
        if not 1 <= self.n_sources <= MAX_SOURCES:
            raise ConfigError(f"n_sources must be in 1..{MAX_SOURCES}")


def check_embeddings(v: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Validate a TF x D embedding matrix with unit-norm rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise InputError("embeddings must be a TF x D matrix")
    if not np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=atol):
        raise InputError("embedding rows must have unit norm")
    return v


def check_labels(y: np.ndarray) -> np.ndarray:
    """Validate a TF x C one-hot label matrix."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
        raise InputError("labels must be one-hot rows")
    return y


def dominant_labels(sources) -> np.ndarray:
    """TF x C one-hot matrix of the dominant source per T-F unit."""
    masks = ideal_binary_mask(sources).masks
    return masks.reshape(masks.shape[0], -1).T


def loss_dc_classic(v, y):
    """Affinity loss ||VV^T - YY^T||_F^2 (returns a node iff ``v`` is one)."""
    if isinstance(v, Node):
        return ad.dc_classic(v, y)
    return float(ad.dc_classic(Tape().constant(v), y).value)


def loss_dc_whitened(v, y, ridge: float = DEFAULT_RIDGE):
    """Whitened k-means deep clustering loss, trace form."""
    out = ad.dc_whitened(v if isinstance(v, Node) else Tape().constant(v), y, ridge)
    if not np.isfinite(out.value):
        raise NumericalError("whitened DC loss is not finite")
    return out if isinstance(v, Node) else float(out.value)


def _mask_node(masks) -> Node:
    if isinstance(masks, Node):
        return masks
    return Tape().constant(np.asarray(masks, dtype=np.float64))


def _min_over_permutations(pair_losses, n_sources: int) -> Node:
    """pair_losses[i][c] compares estimate i with reference c."""
    return ad.min_perm(permutation_losses(pair_losses, n_sources))


def permutation_losses(pair_losses, n_sources: int) -> list:
    """One summed loss per permutation, in ``itertools.permutations`` order."""
    if n_sources > MAX_SOURCES:
        raise ConfigError(f"permutation search supports at most {MAX_SOURCES} sources")
    out = []
    for perm in itertools.permutations(range(n_sources)):
        total = pair_losses[perm[0]][0]
        for c in range(1, n_sources):
            total = total + pair_losses[perm[c]][c]
        out.append(total)
    return out


def _pairwise_l1(estimates, targets):
    return [[ad.l1(est, tgt) for tgt in targets] for est in estimates]


def _finish(loss: Node, count: int, normalize: bool) -> Node:
    return loss * (1.0 / count) if normalize else loss


def loss_tpsa(masks, mixture: ComplexSpectrogram, sources, gamma: float, normalize=False):
    """Permutation-free truncated phase-sensitive spectrum approximation."""
    masks = _mask_node(masks)
    n_src = len(sources)
    if masks.shape[0] != n_src or masks.shape[1:] != mixture.shape:
        raise InputError(f"masks {masks.shape} do not match {n_src} x {mixture.shape}")
    if n_src > MAX_SOURCES:
        raise ConfigError(f"permutation search supports at most {MAX_SOURCES} sources")
    mag_x = np.abs(mixture.data)
    targets = [psa_target(s, mixture, gamma) for s in sources]
    estimates = [masks[c] * mag_x for c in range(n_src)]
    loss = _min_over_permutations(_pairwise_l1(estimates, targets), n_src)
    return _finish(loss, masks.value.size, normalize)


def loss_chimera(alpha, v, y, masks, mixture, sources, gamma, ridge=DEFAULT_RIDGE, normalize=False):
    """alpha * whitened DC + (1 - alpha) * tPSA.  DC is skipped when alpha == 0."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    mi = loss_tpsa(masks, mixture, sources, gamma, normalize)
    if alpha == 0.0:
        return mi
    if v is None:
        raise InputError("chimera loss with alpha > 0 needs embeddings")
    dc = ad.dc_whitened(v if isinstance(v, Node) else mi.tape.constant(v), y, ridge)
    if alpha == 1.0:
        return dc
    return dc * alpha + mi * (1.0 - alpha)


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def unfolded_misi(masks, mixture_wave, mixture: ComplexSpectrogram, n_iter: int, eps: float = 1e-8):
    """Differentiable MISI: returns the C signal nodes after ``n_iter`` iterations.

    Iteration 0 is the iSTFT of the masked magnitude with the mixture phase.
    """
    if n_iter < 0:
        raise ConfigError("number of MISI iterations must be >= 0")
    masks = _mask_node(masks)
    tape = masks.tape
    cfg, length = mixture.config, mixture.original_length
    if length is None:
        raise InputError("mixture spectrogram needs original_length")
    if masks.shape[1:] != mixture.shape:
        raise InputError(f"masks {masks.shape} do not match mixture {mixture.shape}")
    n_src = masks.shape[0]
    mag_x = np.abs(mixture.data)
    mix_planes = tape.constant(to_planes(mixture.data))
    mags = [masks[c] * mag_x for c in range(n_src)]
    signals = [ad.istft(ad.polar_reassign(mix_planes, a, eps), cfg, length) for a in mags]
    if n_iter == 0:
        return signals
    x = _samples(mixture_wave)
    if x.size != length:
        raise InputError(f"mixture waveform has {x.size} samples, spectrogram implies {length}")
    for _ in range(n_iter):
        total = signals[0]
        for s in signals[1:]:
            total = total + s
        share = (x - total) * (1.0 / n_src)
        signals = [
            ad.istft(ad.polar_reassign(ad.stft(s + share, cfg), a, eps), cfg, length)
            for s, a in zip(signals, mags)
        ]
    return signals


def _waveform_loss(signals, sources, normalize):
    refs = [_samples(s) for s in sources]
    length = signals[0].shape[0]
    if any(r.size != length for r in refs):
        raise InputError("reference waveforms must match the mixture length")
    if len(refs) != len(signals):
        raise InputError(f"{len(signals)} estimates vs {len(refs)} references")
    loss = _min_over_permutations(_pairwise_l1(signals, refs), len(refs))
    return _finish(loss, length * len(refs), normalize)


def loss_wa(masks, mixture: ComplexSpectrogram, sources, normalize=False, eps=1e-8):
    """Waveform approximation: L1 after iSTFT with the mixture phase."""
    signals = unfolded_misi(masks, None, mixture, 0, eps)
    return _waveform_loss(signals, sources, normalize)


def loss_wa_misi(masks, mixture_wave, mixture: ComplexSpectrogram, sources, n_iter: int,
                 normalize=False, eps=1e-8):
    """Waveform approximation after ``n_iter`` unfolded MISI iterations."""
    signals = unfolded_misi(masks, mixture_wave, mixture, n_iter, eps)
    return _waveform_loss(signals, sources, normalize)
