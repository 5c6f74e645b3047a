"""Guided denoiser: predicts the adversarial noise and subtracts it.

The network maps x_adv to a noise estimate n(x_adv); the denoised image is
clip01(x_adv - n(x_adv)).  Encoder: three convs with one stride-2
downsample.  Decoder: three convs with one nearest-neighbor upsample and a
single lateral skip from the first encoder activation.  The final conv is
zero-initialized, so an untrained denoiser is exactly the identity.

Training minimizes a guidance loss against a frozen guide classifier:
    pixel  L1 distance between denoised and clean pixels
    fgd    L1 distance between guide feature maps (topmost conv activation)
    lgd    L1 distance between guide logits
    cgd    guide cross-entropy of the denoised image at the true label
Gradients flow through the guide but only denoiser weights move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import attacks, models, ops
from .rng import Rng, derive_seed

GUIDANCE_KINDS = ("pixel", "fgd", "lgd", "cgd")

DEFAULT_CHANNELS = (16, 32, 32, 32, 16)


@dataclass(frozen=True)
class DenoisePair:
    clean: np.ndarray
    adv: np.ndarray
    label: int
    attack: str
    epsilon: float

    def __post_init__(self):
        gap = float(np.abs(self.adv - self.clean).max())
        if gap > self.epsilon + np.spacing(1.0):
            raise ValueError(
                f"pair violates the epsilon ball: gap {gap} > epsilon {self.epsilon}")


@dataclass
class GuidanceLoss:
    kind: str
    guide: object               # frozen Classifier
    layer: int | None = None    # fgd feature layer; default: topmost conv

    def __post_init__(self):
        if self.kind not in GUIDANCE_KINDS:
            raise ValueError(f"guidance kind must be one of {GUIDANCE_KINDS}")
        if self.kind == "fgd" and self.layer is None:
            self.layer = self.guide.top_conv_layer()


class DenoiserNet:
    """Fixed 6-conv encoder/decoder with one skip; weights k1..k6."""

    def __init__(self, input_shape, channels, weights, name: str = "denoiser"):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.channels = tuple(int(v) for v in channels)
        self.weights = weights
        self.name = name

    def forward_trace(self, x: np.ndarray):
        k = self.weights
        a0 = np.ascontiguousarray(x, dtype=np.float64)
        if a0.shape != self.input_shape:
            raise ValueError(f"denoiser input {a0.shape} != {self.input_shape}")
        z1 = ops.conv2d(a0, k[0], 1, 1)
        a1 = ops.relu(z1)
        z2 = ops.conv2d(a1, k[1], 2, 1)
        a2 = ops.relu(z2)
        z3 = ops.conv2d(a2, k[2], 1, 1)
        a3 = ops.relu(z3)
        z4 = ops.conv2d(a3, k[3], 1, 1)
        a4 = ops.relu(z4)
        up = ops.upsample2_nearest(a4)
        s = ops.concat_channels(up, a1)
        z5 = ops.conv2d(s, k[4], 1, 1)
        a5 = ops.relu(z5)
        noise = ops.conv2d(a5, k[5], 1, 1)
        return noise, (a0, z1, a1, z2, a2, z3, a3, z4, s, z5, a5)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_trace(x)[0]

    def backward(self, trace, upstream: np.ndarray):
        """Gradients of sum(upstream * noise) wrt input and weights."""
        k = self.weights
        a0, z1, a1, z2, a2, z3, a3, z4, s, z5, a5 = trace
        ga5, gk6 = ops.conv2d_backward(a5, k[5], 1, 1, upstream)
        gz5 = ops.relu_backward(z5, ga5)
        gs, gk5 = ops.conv2d_backward(s, k[4], 1, 1, gz5)
        gup, ga1_skip = ops.split_channels_backward(gs, self.channels[3])
        ga4 = ops.upsample2_nearest_backward(gup)
        gz4 = ops.relu_backward(z4, ga4)
        ga3, gk4 = ops.conv2d_backward(a3, k[3], 1, 1, gz4)
        gz3 = ops.relu_backward(z3, ga3)
        ga2, gk3 = ops.conv2d_backward(a2, k[2], 1, 1, gz3)
        gz2 = ops.relu_backward(z2, ga2)
        ga1, gk2 = ops.conv2d_backward(a1, k[1], 2, 1, gz2)
        gz1 = ops.relu_backward(z1, ga1 + ga1_skip)
        gx, gk1 = ops.conv2d_backward(a0, k[0], 1, 1, gz1)
        return gx, [gk1, gk2, gk3, gk4, gk5, gk6]

    def copy(self) -> "DenoiserNet":
        return DenoiserNet(self.input_shape, self.channels,
                           [w.copy() for w in self.weights], self.name)


def build_denoiser(input_shape=(3, 32, 32), channels=DEFAULT_CHANNELS,
                   seed: int = 0, name: str = "denoiser") -> DenoiserNet:
    c_in = input_shape[0]
    c1, c2, c3, c4, c5 = channels
    shapes = [
        (c1, c_in, 3, 3),
        (c2, c1, 4, 4),
        (c3, c2, 3, 3),
        (c4, c3, 3, 3),
        (c5, c4 + c1, 3, 3),
        (c_in, c5, 3, 3),
    ]
    weights = []
    for i, shp in enumerate(shapes):
        if i == len(shapes) - 1:
            weights.append(np.zeros(shp))   # identity denoiser at init
        else:
            fan_in = int(np.prod(shp[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            rng = Rng(derive_seed(seed, "denoiser_init", i))
            weights.append(rng.uniform_array(shp, -bound, bound))
    return DenoiserNet(input_shape, channels, weights, name)


def denoise(net: DenoiserNet, x_adv: np.ndarray) -> np.ndarray:
    return ops.clip01(np.asarray(x_adv, dtype=np.float64) - net.forward(x_adv))


# ---------------------------------------------------------------------------
# Training set generation

def default_recipes(model_names) -> list:
    out = []
    names = list(model_names)
    for n in names:
        out.append(("fgsm", (n,)))
        out.append(("ifgsm", (n,)))
    if len(names) > 1:
        out.append(("fgsm", tuple(names)))
        out.append(("ifgsm", tuple(names)))
    return out


def generate_trainset(zoo: dict, records: list, per_class_count: int,
                      seed: int = 0, recipes: list | None = None,
                      epsilons=attacks.ARENA_EPSILONS) -> list:
    """Build clean/adversarial pairs: per_class_count per class, each with a
    seeded random recipe (FGSM or iterative FGSM, single model or ensemble)
    and an epsilon drawn from the arena set."""
    if recipes is None:
        recipes = default_recipes(zoo.keys())
    by_class: dict = {}
    for rec in records:
        by_class.setdefault(rec.true_label, []).append(rec)
    pairs = []
    for label in sorted(by_class):
        pool = by_class[label]
        if len(pool) < per_class_count:
            raise ValueError(
                f"class {label} has only {len(pool)} images, need {per_class_count}")
        order = list(range(len(pool)))
        Rng(derive_seed(seed, "pair_pool", label)).shuffle(order)
        for j in range(per_class_count):
            rec = pool[order[j]]
            rng = Rng(derive_seed(seed, "pair", label, j))
            method, member_names = recipes[rng.randint(len(recipes))]
            eps = epsilons[rng.randint(len(epsilons))]
            members = [zoo[n] for n in member_names]
            target = members[0] if len(members) == 1 else attacks.EnsembleSpec.uniform(members)
            if method == "fgsm":
                adv = attacks.fgsm(target, rec.pixels, rec.true_label, eps)
                tag = "fgsm"
            else:
                cfg = attacks.AttackConfig(epsilon=eps, steps=10,
                                           seed=derive_seed(seed, "pair_attack", label, j))
                adv = attacks.iterative(target, rec.pixels, rec.true_label, cfg)
                tag = "ifgsm"
            pairs.append(DenoisePair(rec.pixels, adv, rec.true_label,
                                     f"{tag}:{'+'.join(member_names)}", eps))
    return pairs


# ---------------------------------------------------------------------------
# Training

@dataclass
class DenoiserTrainConfig:
    epochs: int = 12
    batch_size: int = 16
    lr: float = 0.02
    momentum: float = 0.9
    seed: int = 0


def _guidance_grad(guidance: GuidanceLoss, denoised: np.ndarray, pair: DenoisePair):
    """Loss value and its gradient wrt the denoised image."""
    g = guidance.guide
    if guidance.kind == "pixel":
        diff = denoised - pair.clean
        return float(np.abs(diff).mean()), np.sign(diff) / diff.size
    if guidance.kind == "lgd":
        ref = g.logits(pair.clean)
        logits, trace = g.forward_trace(denoised)
        diff = logits - ref
        up = np.sign(diff) / diff.size
        return float(np.abs(diff).mean()), g.backward(trace, up)
    if guidance.kind == "fgd":
        layer = guidance.layer
        ref, _ = g.feature_trace(pair.clean, layer)
        feat, trace = g.feature_trace(denoised, layer)
        diff = feat - ref
        up = np.sign(diff) / diff.size
        return float(np.abs(diff).mean()), g.feature_backward(trace, up, layer)
    # cgd
    logits, trace = g.forward_trace(denoised)
    loss, glog = ops.softmax_cross_entropy(logits, pair.label)
    return loss, g.backward(trace, glog)


def train_denoiser(net: DenoiserNet, pairs: list, guidance: GuidanceLoss,
                   cfg: DenoiserTrainConfig) -> DenoiserNet:
    """Seeded mini-batch SGD on the denoiser weights only."""
    net = net.copy()
    velocity = [np.zeros_like(w) for w in net.weights]
    order = list(range(len(pairs)))
    for epoch in range(cfg.epochs):
        Rng(derive_seed(cfg.seed, "shuffle", epoch)).shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [pairs[i] for i in order[start:start + cfg.batch_size]]
            grads = [np.zeros_like(w) for w in net.weights]
            for pair in batch:
                noise, trace = net.forward_trace(pair.adv)
                raw = pair.adv - noise
                denoised = ops.clip01(raw)
                _, g_denoised = _guidance_grad(guidance, denoised, pair)
                # d denoised / d noise = -1 inside the clip's linear region
                mask = (raw > 0.0) & (raw < 1.0)
                g_noise = -np.where(mask, g_denoised, 0.0)
                _, wgrads = net.backward(trace, g_noise)
                for acc, g in zip(grads, wgrads):
                    acc += g
            scale = 1.0 / len(batch)
            for i in range(len(net.weights)):
                velocity[i] = cfg.momentum * velocity[i] - cfg.lr * grads[i] * scale
                net.weights[i] += velocity[i]
    return net


def epoch_losses(net: DenoiserNet, pairs: list, guidance: GuidanceLoss) -> float:
    total = 0.0
    for pair in pairs:
        denoised = denoise(net, pair.adv)
        loss, _ = _guidance_grad(guidance, denoised, pair)
        total += loss
    return total / len(pairs)


# ---------------------------------------------------------------------------
# Serialization: same container as classifiers, kind "denoiser".

def save_denoiser(net: DenoiserNet, path) -> None:
    doc = {"kind": "denoiser", "name": net.name,
           "input": list(net.input_shape), "channels": list(net.channels)}
    models.write_container(path, json.dumps(doc, sort_keys=True, separators=(",", ":")),
                           net.weights)


def load_denoiser(path) -> DenoiserNet:
    spec_text, tensors = models.read_container(path)
    try:
        doc = json.loads(spec_text)
    except json.JSONDecodeError as exc:
        raise models.WeightsFormatError(f"invalid spec text: {exc}") from exc
    if doc.get("kind") != "denoiser":
        raise models.WeightsFormatError(
            f"container holds a {doc.get('kind')!r}, not a denoiser")
    net = build_denoiser(tuple(doc["input"]), tuple(doc["channels"]), seed=0,
                         name=doc.get("name", "denoiser"))
    if len(tensors) != len(net.weights):
        raise models.WeightsFormatError(
            f"denoiser container has {len(tensors)} tensors, expected {len(net.weights)}")
    for i, (t, w) in enumerate(zip(tensors, net.weights)):
        if t.shape != w.shape:
            raise models.WeightsFormatError(
                f"denoiser tensor {i} shape {t.shape} does not match {w.shape}")
    net.weights = tensors
    return net
