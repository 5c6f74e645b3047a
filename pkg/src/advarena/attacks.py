"""Evasion attacks under an L-infinity pixel budget.

Every attack returns an image inside both [0, 1] and the epsilon-ball of
the clean input, and is bit-reproducible for a given seed.  Attacks accept
either a single classifier or an :class:`EnsembleSpec`; ensembles fuse
members by summed logits, mixed probabilities, or summed losses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .rng import Rng, derive_seed

FUSIONS = ("logit_fuse", "prob_ensemble", "loss_ensemble")

ARENA_EPSILONS = (4.0 / 255.0, 8.0 / 255.0, 12.0 / 255.0, 16.0 / 255.0)

_PROB_FLOOR = 1e-300   # keeps -log finite when a mixture saturates


@dataclass(frozen=True)
class EnsembleSpec:
    """Weighted set of classifiers plus a fusion mode."""

    members: tuple              # ((classifier, weight), ...)
    fusion: str = "logit_fuse"

    def __post_init__(self):
        object.__setattr__(self, "members", tuple((m, float(w)) for m, w in self.members))
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        weights = [w for _, w in self.members]
        if min(weights) < 0.0:
            raise ValueError("ensemble weights must be >= 0")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights sum to {sum(weights)}, need 1 within 1e-9")

    @staticmethod
    def uniform(models_seq, fusion: str = "logit_fuse") -> "EnsembleSpec":
        models_seq = list(models_seq)
        w = 1.0 / len(models_seq)
        return EnsembleSpec(tuple((m, w) for m in models_seq), fusion)


@dataclass
class AttackConfig:
    epsilon: float
    steps: int = 1
    step_size: float | None = None       # default epsilon / steps
    momentum: float = 0.0
    random_start: bool = False
    random_start_scale: float = 1.0      # fraction of the epsilon ball
    targeted: bool = False
    aug_samples: int = 0                 # warp draws per model per step
    warp_spread: float = 0.0
    step_sizes: tuple | None = None      # per-step schedule, overrides step_size
    active_sets: tuple | None = None     # per-step member-index tuples
    gate_threshold: float = 0.05         # targeted gate-off loss tau
    loss_ceiling: float | None = None    # non-targeted gate-off level
    preassigned_steps: tuple | None = None  # per-model iteration counts
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None and self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if self.aug_samples < 0:
            raise ValueError("aug_samples must be >= 0")

    @property
    def alpha(self) -> float:
        return self.epsilon / self.steps if self.step_size is None else self.step_size


def project_linf(x_adv: np.ndarray, x_clean: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp into the epsilon-ball of x_clean intersected with [0, 1]."""
    lo = np.maximum(x_clean - epsilon, 0.0)
    hi = np.minimum(x_clean + epsilon, 1.0)
    return np.minimum(np.maximum(x_adv, lo), hi)


def _loss_grad(model_or_ens, x: np.ndarray, label: int):
    if isinstance(model_or_ens, EnsembleSpec):
        return ensemble_loss_grad(model_or_ens, x, label)
    loss, gx = model_or_ens.loss_grad_input(x, label)
    return loss, gx


def ensemble_loss_grad(ens: EnsembleSpec, x: np.ndarray, label: int):
    """Fused cross-entropy loss and its input gradient for an ensemble."""
    if ens.fusion == "logit_fuse":
        traces = []
        fused = None
        for model, w in ens.members:
            logits, trace = model.forward_trace(x)
            traces.append(trace)
            contrib = w * logits
            fused = contrib if fused is None else fused + contrib
        loss, glog = ops.softmax_cross_entropy(fused, label)
        grad = None
        for (model, w), trace in zip(ens.members, traces):
            g = model.backward(trace, w * glog)
            grad = g if grad is None else grad + g
        return loss, grad

    if ens.fusion == "prob_ensemble":
        probs, traces = [], []
        mix = None
        for model, w in ens.members:
            logits, trace = model.forward_trace(x)
            p = ops.softmax(logits)
            probs.append(p)
            traces.append(trace)
            contrib = w * p
            mix = contrib if mix is None else mix + contrib
        p_label = max(float(mix[label]), _PROB_FLOOR)
        loss = -float(np.log(p_label))
        grad = None
        for (model, w), p, trace in zip(ens.members, probs, traces):
            onehot = np.zeros_like(p)
            onehot[label] = 1.0
            glog = (w * p[label] / p_label) * (p - onehot)
            g = model.backward(trace, glog)
            grad = g if grad is None else grad + g
        return loss, grad

    # loss_ensemble: weighted sum of per-member cross-entropies
    total = 0.0
    grad = None
    for model, w in ens.members:
        loss_k, g_k = model.loss_grad_input(x, label)
        total += w * loss_k
        g = w * g_k
        grad = g if grad is None else grad + g
    return total, grad


def _signed_step(x, x_clean, direction, alpha, epsilon, descend):
    step = alpha * ops.sign(direction)
    moved = x - step if descend else x + step
    return project_linf(ops.clip01(moved), x_clean, epsilon)


def _random_start(x_clean, epsilon, scale, rng: Rng):
    mag = epsilon * scale
    noise = rng.uniform_array(x_clean.shape, -mag, mag)
    return project_linf(ops.clip01(x_clean + noise), x_clean, epsilon)


def fgsm(model, x: np.ndarray, label: int, epsilon: float) -> np.ndarray:
    """One signed-gradient step of size epsilon away from ``label``."""
    _, gx = _loss_grad(model, x, label)
    return _signed_step(x, x, gx, epsilon, epsilon, descend=False)


def iterative(model_or_ens, x: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    """T projected signed-gradient steps; ascends the loss at ``label`` or,
    when cfg.targeted, descends the loss at the target label."""
    x_clean = x
    cur = x
    if cfg.random_start:
        cur = _random_start(x_clean, cfg.epsilon, cfg.random_start_scale,
                            Rng(derive_seed(cfg.seed, "random_start")))
    for _ in range(cfg.steps):
        _, gx = _loss_grad(model_or_ens, cur, label)
        cur = _signed_step(cur, x_clean, gx, cfg.alpha, cfg.epsilon, descend=cfg.targeted)
    return cur


def momentum_accumulate(g, grad, mu: float, norm: float):
    """One momentum update g <- mu * g + grad / max(norm, 1e-12)."""
    return mu * g + grad / max(norm, 1e-12)


def mim_nontargeted(ens, x: np.ndarray, pseudo_label: int, cfg: AttackConfig) -> np.ndarray:
    """Momentum iterative attack: L1-normalized gradients accumulate with
    decay cfg.momentum; steps are alpha * sign(g)."""
    x_clean = x
    cur = x
    g = np.zeros_like(x)
    for _ in range(cfg.steps):
        _, gx = _loss_grad(ens, cur, pseudo_label)
        g = momentum_accumulate(g, gx, cfg.momentum, float(np.abs(gx).sum()))
        cur = _signed_step(cur, x_clean, g, cfg.alpha, cfg.epsilon, descend=False)
    return cur


def mim_targeted(ens, x: np.ndarray, target_label: int, cfg: AttackConfig) -> np.ndarray:
    """Targeted momentum attack with std-normalized accumulation and
    quantized steps: x <- clip01(x - alpha * clip_[-2,2](round(g)))."""
    x_clean = x
    cur = x
    g = np.zeros_like(x)
    for _ in range(cfg.steps):
        _, gx = _loss_grad(ens, cur, target_label)
        g = momentum_accumulate(g, gx, cfg.momentum, float(np.std(gx)))
        quant = ops.clip_range(ops.round_nearest(g), -2.0, 2.0)
        cur = project_linf(ops.clip01(cur - cfg.alpha * quant), x_clean, cfg.epsilon)
    return cur


def mim_nontargeted_config(epsilon: float, seed: int = 0) -> AttackConfig:
    return AttackConfig(epsilon=epsilon, steps=10, momentum=1.0, seed=seed)


def mim_targeted_steps(epsilon: float) -> int:
    """Default iteration count: 40 below 8/255, else 20."""
    return 40 if epsilon < 8.0 / 255.0 else 20


def mim_targeted_config(epsilon: float, seed: int = 0) -> AttackConfig:
    return AttackConfig(epsilon=epsilon, steps=mim_targeted_steps(epsilon),
                        momentum=1.0, targeted=True, seed=seed)


def dynamic_iterative_ensemble(models_seq, x: np.ndarray, label: int, cfg: AttackConfig,
                               diagnostics: dict | None = None) -> np.ndarray:
    """Iterative loss-ensemble attack with per-step member gating.

    Members start active with uniform weight 1/M (M never changes).  In
    targeted mode a member whose target-class loss falls below
    cfg.gate_threshold is gated out for all later steps; non-targeted mode
    gates out members whose true-class loss exceeds cfg.loss_ceiling.
    cfg.preassigned_steps (per-member iteration counts) overrides the
    loss-based gates.  A gated-out member's loss is never evaluated again.
    """
    models_seq = list(models_seq)
    m_total = len(models_seq)
    w = 1.0 / m_total
    active = [True] * m_total
    evals = [0] * m_total
    active_log = []
    noop_steps = []
    x_clean = x
    cur = x
    for t in range(cfg.steps):
        if cfg.preassigned_steps is not None:
            active = [t < cfg.preassigned_steps[k] for k in range(m_total)]
        active_log.append([k for k in range(m_total) if active[k]])
        if not any(active):
            noop_steps.append(t)
            continue
        grad = None
        next_active = list(active)
        for k, model in enumerate(models_seq):
            if not active[k]:
                continue
            loss_k, g_k = model.loss_grad_input(cur, label)
            evals[k] += 1
            g = w * g_k
            grad = g if grad is None else grad + g
            if cfg.preassigned_steps is None:
                if cfg.targeted and loss_k < cfg.gate_threshold:
                    next_active[k] = False
                elif (not cfg.targeted and cfg.loss_ceiling is not None
                      and loss_k > cfg.loss_ceiling):
                    next_active[k] = False
        active = next_active
        cur = _signed_step(cur, x_clean, grad, cfg.alpha, cfg.epsilon, descend=cfg.targeted)
    if diagnostics is not None:
        diagnostics["active_sets"] = active_log
        diagnostics["loss_evals"] = evals
        diagnostics["noop_steps"] = noop_steps
    return cur


def sample_warp(rng: Rng, spread: float, size: int) -> ops.WarpParams:
    """Small random projective jitter around the identity.

    spread scales all components: ~10% affine terms, ~2px translation and
    ~0.002 projective terms at spread 1.  spread 0 is exactly the identity.
    """
    if spread == 0.0:
        return ops.WarpParams.identity()
    u = [rng.uniform(-1.0, 1.0) for _ in range(8)]
    t = (1.0 + spread * 0.10 * u[0], spread * 0.10 * u[1], spread * 2.0 * u[2],
         spread * 0.10 * u[3], 1.0 + spread * 0.10 * u[4], spread * 2.0 * u[5],
         spread * 0.002 * u[6], spread * 0.002 * u[7])
    return ops.WarpParams(t)


def augmented_ensemble_attack(models_seq, pseudo_model, x: np.ndarray,
                              cfg: AttackConfig,
                              diagnostics: dict | None = None) -> np.ndarray:
    """Transfer attack that never reads the true label.

    The label is pseudo_model's prediction on the clean input.  Each step
    averages input gradients over cfg.aug_samples random projective warps of
    the current image per active model (gradients pulled back through the
    warp transpose), then over the active models, and takes a signed step of
    the scheduled size.  cfg.active_sets selects member indices per step;
    the default schedule is 8 steps at epsilon/4 for 3 steps then epsilon/8.
    """
    models_seq = list(models_seq)
    pseudo_label = pseudo_model.predict(x)
    if diagnostics is not None:
        diagnostics["pseudo_label"] = pseudo_label
    if cfg.step_sizes is not None:
        schedule = tuple(cfg.step_sizes)
    else:
        schedule = tuple(cfg.epsilon / 4.0 if i < 3 else cfg.epsilon / 8.0
                         for i in range(8 if cfg.steps == 1 else cfg.steps))
    x_clean = x
    cur = x
    rng = Rng(derive_seed(cfg.seed, "augmented"))
    if cfg.random_start and cfg.random_start_scale > 0.0:
        cur = _random_start(x_clean, cfg.epsilon, cfg.random_start_scale,
                            Rng(derive_seed(cfg.seed, "random_start")))
    h, w_ext = x.shape[1], x.shape[2]
    for i, alpha in enumerate(schedule):
        if cfg.active_sets is not None:
            indices = list(cfg.active_sets[min(i, len(cfg.active_sets) - 1)])
        else:
            indices = list(range(len(models_seq)))
        if not indices:
            continue
        w_model = 1.0 / len(indices)
        grad = None
        for k in indices:
            model = models_seq[k]
            if cfg.aug_samples > 0 and cfg.warp_spread != 0.0:
                g_model = None
                for _ in range(cfg.aug_samples):
                    params = sample_warp(rng, cfg.warp_spread, h)
                    warped = ops.projective_warp(cur, params)
                    _, g_w = model.loss_grad_input(warped, pseudo_label)
                    g_pulled = ops.projective_warp_backward(g_w, params, h, w_ext)
                    g_model = g_pulled if g_model is None else g_model + g_pulled
                g_model = g_model / cfg.aug_samples
            else:
                # spread 0 makes every sample the identity warp; skipping the
                # sampling loop keeps the average bit-exact.
                _, g_model = model.loss_grad_input(cur, pseudo_label)
            g = w_model * g_model
            grad = g if grad is None else grad + g
        cur = _signed_step(cur, x_clean, grad, alpha, cfg.epsilon, descend=False)
    return cur


# ---------------------------------------------------------------------------
# Attack FCN: a trained fully-convolutional perturbation generator with one
# bounded output head per epsilon level.

FCN_GRID_EPSILONS = tuple(k / 255.0 for k in range(4, 17))


class AttackNet:
    """Three-conv generator a(x); head h emits eps_h * tanh(raw_h), so its
    output lives in [-eps_h, +eps_h] by construction.  With hints enabled the
    input gains three channels: the sign gradient of a designated hint model
    at its own predicted label."""

    def __init__(self, input_shape, channels, epsilons, hints, weights,
                 name: str = "attack_fcn"):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.channels = tuple(int(v) for v in channels)
        self.epsilons = tuple(float(e) for e in epsilons)
        self.hints = bool(hints)
        self.weights = weights
        self.name = name

    def forward_trace(self, x_in: np.ndarray):
        w = self.weights
        z1 = ops.conv2d(x_in, w[0], 1, 1)
        a1 = ops.relu(z1)
        z2 = ops.conv2d(a1, w[1], 1, 1)
        a2 = ops.relu(z2)
        raw = ops.conv2d(a2, w[2], 1, 1)
        return raw, (x_in, z1, a1, z2, a2)

    def backward(self, trace, upstream: np.ndarray):
        w = self.weights
        x_in, z1, a1, z2, a2 = trace
        ga2, gw3 = ops.conv2d_backward(a2, w[2], 1, 1, upstream)
        gz2 = ops.relu_backward(z2, ga2)
        ga1, gw2 = ops.conv2d_backward(a1, w[1], 1, 1, gz2)
        gz1 = ops.relu_backward(z1, ga1)
        _, gw1 = ops.conv2d_backward(x_in, w[0], 1, 1, gz1)
        return [gw1, gw2, gw3]

    def head_slice(self, head: int) -> slice:
        return slice(3 * head, 3 * head + 3)

    def copy(self) -> "AttackNet":
        return AttackNet(self.input_shape, self.channels, self.epsilons,
                         self.hints, [w.copy() for w in self.weights], self.name)


def build_attack_fcn(epsilon_levels, input_shape=(3, 32, 32), channels=(8, 8),
                     hints: bool = False, seed: int = 0,
                     name: str = "attack_fcn") -> AttackNet:
    levels = tuple(float(e) for e in epsilon_levels)
    if not levels:
        raise ValueError("epsilon_levels must not be empty")
    for e in levels:
        if not any(abs(e - g) < 1e-12 for g in FCN_GRID_EPSILONS):
            raise ValueError(
                f"epsilon {e} is not on the supported grid 4/255 .. 16/255")
    if len(set(levels)) != len(levels):
        raise ValueError("epsilon_levels must be distinct")
    c_in = input_shape[0] + (3 if hints else 0)
    c1, c2 = channels
    shapes = [(c1, c_in, 3, 3), (c2, c1, 3, 3), (3 * len(levels), c2, 3, 3)]
    weights = []
    for i, shp in enumerate(shapes):
        if i == len(shapes) - 1:
            weights.append(np.zeros(shp))   # zero head: a(x) = 0 at init
        else:
            fan_in = int(np.prod(shp[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            rng = Rng(derive_seed(seed, "fcn_init", i))
            weights.append(rng.uniform_array(shp, -bound, bound))
    return AttackNet(input_shape, channels, levels, hints, weights, name)


def _hint_channels(hint_model, x: np.ndarray) -> np.ndarray:
    pseudo = hint_model.predict(x)
    _, g = hint_model.loss_grad_input(x, pseudo)
    return ops.sign(g)


def _fcn_input(net: AttackNet, x: np.ndarray, hint_model) -> np.ndarray:
    if not net.hints:
        return x
    if hint_model is None:
        raise ValueError(f"{net.name} was trained with hint channels; "
                         "a hint model is required")
    return ops.concat_channels(x, _hint_channels(hint_model, x))


def apply_attack_fcn(net: AttackNet, x: np.ndarray, epsilon: float,
                     hint_model=None) -> np.ndarray:
    """Perturb x with the head trained for this epsilon level."""
    head = next((i for i, e in enumerate(net.epsilons)
                 if abs(e - epsilon) < 1e-12), None)
    if head is None:
        trained = ", ".join(f"{round(e * 255)}/255" for e in net.epsilons)
        raise ValueError(f"epsilon {epsilon} has no trained head (heads: {trained})")
    x = np.asarray(x, dtype=np.float64)
    raw, _ = net.forward_trace(_fcn_input(net, x, hint_model))
    a = net.epsilons[head] * np.tanh(raw[net.head_slice(head)])
    return project_linf(ops.clip01(x + a), x, epsilon)


@dataclass
class FcnTrainConfig:
    epochs: int = 16
    batch_size: int = 16
    lr: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must be in [0, 1)")


def train_attack_fcn(target_models, records, epsilon_levels, cfg: FcnTrainConfig,
                     hints: bool = False, hint_model=None,
                     channels=(8, 8)) -> AttackNet:
    """Ascend the summed cross-entropy of every target model over every
    epsilon head: maximize sum_x sum_f sum_h J(f(clip01(x + a_h(x))), y).

    The update is adaptive (per-weight moment normalization): the raw
    gradient passes through eps * (1 - tanh^2) and a zero-initialized head,
    which leaves plain SGD orders of magnitude too slow at any usable rate."""
    models_seq = list(target_models)
    if not models_seq:
        raise ValueError("need at least one target model")
    records = list(records)
    input_shape = models_seq[0].spec.input_shape
    net = build_attack_fcn(epsilon_levels, input_shape, channels, hints, cfg.seed)
    if net.hints and hint_model is None:
        raise ValueError("hints enabled but no hint model given")
    moment1 = [np.zeros_like(w) for w in net.weights]
    moment2 = [np.zeros_like(w) for w in net.weights]
    step = 0
    order = list(range(len(records)))
    for epoch in range(cfg.epochs):
        Rng(derive_seed(cfg.seed, "shuffle", epoch)).shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [records[i] for i in order[start:start + cfg.batch_size]]
            grads = [np.zeros_like(w) for w in net.weights]
            for rec in batch:
                x = rec.pixels
                x_in = _fcn_input(net, x, hint_model)
                raw, trace = net.forward_trace(x_in)
                g_raw = np.zeros_like(raw)
                for h, eps in enumerate(net.epsilons):
                    sl = net.head_slice(h)
                    t = np.tanh(raw[sl])
                    adv_raw = x + eps * t
                    adv = ops.clip01(adv_raw)
                    g_adv = None
                    for model in models_seq:
                        _, g = model.loss_grad_input(adv, rec.true_label)
                        g_adv = g if g_adv is None else g_adv + g
                    mask = (adv_raw > 0.0) & (adv_raw < 1.0)
                    g_raw[sl] = np.where(mask, g_adv, 0.0) * eps * (1.0 - t * t)
                wgrads = net.backward(trace, g_raw)
                for acc, g in zip(grads, wgrads):
                    acc += g
            step += 1
            scale = 1.0 / len(batch)
            for i in range(len(net.weights)):
                g = grads[i] * scale
                moment1[i] = cfg.beta1 * moment1[i] + (1.0 - cfg.beta1) * g
                moment2[i] = cfg.beta2 * moment2[i] + (1.0 - cfg.beta2) * g * g
                m_hat = moment1[i] / (1.0 - cfg.beta1 ** step)
                v_hat = moment2[i] / (1.0 - cfg.beta2 ** step)
                net.weights[i] += cfg.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    return net


def save_attack_fcn(net: AttackNet, path) -> None:
    from . import models
    doc = {"kind": "attack_fcn", "name": net.name,
           "input": list(net.input_shape), "channels": list(net.channels),
           "epsilons_255": [round(e * 255) for e in net.epsilons],
           "hints": net.hints}
    models.write_container(path, json.dumps(doc, sort_keys=True, separators=(",", ":")),
                           net.weights)


def load_attack_fcn(path) -> AttackNet:
    from . import models
    spec_text, tensors = models.read_container(path)
    try:
        doc = json.loads(spec_text)
    except json.JSONDecodeError as exc:
        raise models.WeightsFormatError(f"invalid spec text: {exc}") from exc
    if doc.get("kind") != "attack_fcn":
        raise models.WeightsFormatError(
            f"container holds a {doc.get('kind')!r}, not an attack_fcn")
    net = build_attack_fcn([k / 255.0 for k in doc["epsilons_255"]],
                           tuple(doc["input"]), tuple(doc["channels"]),
                           doc["hints"], seed=0, name=doc.get("name", "attack_fcn"))
    if len(tensors) != len(net.weights):
        raise models.WeightsFormatError(
            f"attack_fcn container has {len(tensors)} tensors, expected {len(net.weights)}")
    for i, (t, w) in enumerate(zip(tensors, net.weights)):
        if t.shape != w.shape:
            raise models.WeightsFormatError(
                f"attack_fcn tensor {i} shape {t.shape} does not match {w.shape}")
    net.weights = tensors
    return net
