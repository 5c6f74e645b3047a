"""Input-transformation defenses wrapping zoo classifiers.

Ensembling averages softmax probabilities, never logits.  Randomized
defenses draw all their pattern parameters up front from an explicit seed,
so a (seed, input) pair always yields the same label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .denoiser import denoise
from .rng import Rng, derive_seed

DEFENSE_KINDS = ("direct", "median_ensemble", "bit_depth", "random_resize_pad", "denoised")


@dataclass
class DefenseConfig:
    kind: str = "direct"
    members: tuple = ()          # model names, resolved by the caller/registry
    bits: int = 8
    resize_min: int = 33
    resize_max: int = 40
    pad_to: int = 40
    n_patterns: int = 30
    flip_prob: float = 0.5
    denoiser_path: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"defense kind must be one of {DEFENSE_KINDS}")
        if self.bits < 1 or self.bits > 16:
            raise ValueError("bits must lie in [1, 16]")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.n_patterns < 1:
            raise ValueError("n_patterns must be >= 1")
        if not self.resize_min < self.resize_max:
            raise ValueError("need resize_min < resize_max (half-open draw)")
        if self.resize_max > self.pad_to + 1:
            raise ValueError("need resize_max <= pad_to + 1")


def defend_direct(model, x: np.ndarray) -> int:
    return model.predict(x)


def defend_median_ensemble(models_seq, x: np.ndarray) -> int:
    """2x2 median filter, then the mean softmax of the member models."""
    if not models_seq:
        raise ValueError("median ensemble needs at least one member")
    filtered = ops.median_filter_2x2(x)
    probs = None
    for model in models_seq:
        p = model.softmax(filtered)
        probs = p if probs is None else probs + p
    return int(np.argmax(probs / len(models_seq)))


def defend_bit_depth(model, x: np.ndarray, bits: int) -> int:
    """Quantize to 2**bits uniform levels on [0, 1], then classify."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = float(2 ** bits - 1)
    quant = ops.round_nearest(np.asarray(x, dtype=np.float64) * levels) / levels
    return model.predict(quant)


@dataclass(frozen=True)
class Pattern:
    resize_w: int
    resize_h: int
    left: int
    top: int
    flip: bool


def draw_patterns(cfg: DefenseConfig, rng: Rng) -> list:
    """All randomization patterns for one classification, drawn up front."""
    out = []
    for _ in range(cfg.n_patterns):
        w = cfg.resize_min + rng.randint(cfg.resize_max - cfg.resize_min)
        h = cfg.resize_min + rng.randint(cfg.resize_max - cfg.resize_min)
        left = rng.randint(cfg.pad_to - w + 1)
        top = rng.randint(cfg.pad_to - h + 1)
        flip = rng.uniform() < cfg.flip_prob
        out.append(Pattern(w, h, left, top, flip))
    return out


def apply_pattern(x: np.ndarray, pat: Pattern, pad_to: int) -> np.ndarray:
    """Resize to the pattern's extents, zero-pad into the pad_to square at
    the pattern's offset, then mirror when the pattern says so."""
    resized = ops.bilinear_resize(x, pat.resize_h, pat.resize_w)
    padded = ops.pad_zero(resized, pat.left, pad_to - pat.resize_w - pat.left,
                          pat.top, pad_to - pat.resize_h - pat.top)
    return ops.hflip(padded) if pat.flip else padded


def pad_pattern_count(in_min: int, in_max: int, pad_to: int) -> int:
    """Number of distinct (resize, offset) placements on one axis summed over
    the half-open resize range: sum over s of (pad_to - s + 1)."""
    return sum(pad_to - s + 1 for s in range(in_min, in_max))


def defend_random_resize_pad(model, x: np.ndarray, cfg: DefenseConfig) -> int:
    """Average the model's softmax over cfg.n_patterns random
    resize/pad/flip patterns.  Images are bilinearly resized back to the
    model's native input extents before classification, since the zoo
    classifiers take fixed-size inputs."""
    in_h, in_w = x.shape[1], x.shape[2]
    if in_h > cfg.resize_min or in_w > cfg.resize_min:
        raise ValueError(
            f"input {in_h}x{in_w} exceeds resize_min {cfg.resize_min}; need "
            "input_size <= resize_min < resize_max <= pad_to + 1")
    patterns = draw_patterns(cfg, Rng(derive_seed(cfg.seed, "patterns")))
    model_h, model_w = model.spec.input_shape[1], model.spec.input_shape[2]
    probs = None
    for pat in patterns:
        img = apply_pattern(x, pat, cfg.pad_to)
        img = ops.bilinear_resize(img, model_h, model_w)
        p = model.softmax(img)
        probs = p if probs is None else probs + p
    return int(np.argmax(probs / len(patterns)))


def defend_denoised(model, net, x: np.ndarray) -> int:
    return model.predict(denoise(net, x))


def degenerate_randomization_config(input_size: int, seed: int = 0) -> DefenseConfig:
    """Config whose only pattern is the identity placement."""
    return DefenseConfig(kind="random_resize_pad", resize_min=input_size,
                         resize_max=input_size + 1, pad_to=input_size,
                         n_patterns=1, flip_prob=0.0, seed=seed)
