"""Small from-scratch classifiers: specs, forward/backward, SGD training,
and a binary weights format.

Layer vocabulary: ("conv", out_channels, k, stride, pad) without bias,
("relu",), ("flatten",), ("dense", width) with bias.  Downsampling uses
strided convs; conv geometry must divide exactly (no implicit floor).
Training is plain SGD with momentum over per-image gradients, with
optional adversarial-example substitution in each mini-batch.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .rng import Rng, derive_seed

WEIGHTS_MAGIC = b"ADVW"
WEIGHTS_VERSION = 1

ADV_MODES = ("none", "self_fgsm", "ensemble_fgsm")


class WeightsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple          # (C, H, W)
    n_classes: int
    layers: tuple               # layer descriptor tuples

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(tuple(l) for l in self.layers))
        self.shape_chain()      # validates geometry

    def shape_chain(self) -> list:
        """Per-layer output shapes; raises on invalid geometry."""
        shape = self.input_shape
        chain = []
        for i, layer in enumerate(self.layers):
            kind = layer[0]
            if kind == "conv":
                _, out_ch, k, stride, pad = layer
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: conv needs a (C,H,W) input, got {shape}")
                h = _conv_extent(shape[1], k, stride, pad, i)
                w = _conv_extent(shape[2], k, stride, pad, i)
                shape = (out_ch, h, w)
            elif kind == "relu":
                pass
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif kind == "dense":
                if len(shape) != 1:
                    raise ValueError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (layer[1],)
            else:
                raise ValueError(f"layer {i}: unknown layer kind {kind!r}")
            chain.append(shape)
        if shape != (self.n_classes,):
            raise ValueError(
                f"spec output shape {shape} does not match n_classes {self.n_classes}")
        return chain

    def to_json(self, kind: str = "classifier", name: str = "") -> str:
        doc = {
            "kind": kind,
            "name": name,
            "input": list(self.input_shape),
            "classes": self.n_classes,
            "layers": [list(l) for l in self.layers],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str):
        doc = json.loads(text)
        spec = ModelSpec(tuple(doc["input"]), int(doc["classes"]),
                         tuple(tuple(l) for l in doc["layers"]))
        return spec, doc.get("kind", "classifier"), doc.get("name", "")


def _conv_extent(n: int, k: int, stride: int, pad: int, layer_idx: int) -> int:
    num = n + 2 * pad - k
    if num < 0 or num % stride != 0:
        raise ValueError(
            f"layer {layer_idx}: conv extent ({n} + 2*{pad} - {k}) not divisible by stride {stride}")
    return num // stride + 1


def _layer_param_shapes(spec: ModelSpec):
    """Weight tensor shapes per layer, following the spec chain."""
    shape = spec.input_shape
    out = []
    for layer in spec.layers:
        kind = layer[0]
        if kind == "conv":
            _, out_ch, k, stride, pad = layer
            out.append([(out_ch, shape[0], k, k)])
            h = (shape[1] + 2 * pad - k) // stride + 1
            w = (shape[2] + 2 * pad - k) // stride + 1
            shape = (out_ch, h, w)
        elif kind == "dense":
            out.append([(layer[1], shape[0]), (layer[1],)])
            shape = (layer[1],)
        elif kind == "flatten":
            out.append([])
            shape = (int(np.prod(shape)),)
        else:
            out.append([])
    return out


class Classifier:
    """A spec plus its weights; exposes logits, gradients, and prediction."""

    def __init__(self, name: str, spec: ModelSpec, weights: list):
        self.name = name
        self.spec = spec
        self.weights = weights   # list per layer; conv [K], dense [W, b]

    # -- forward -----------------------------------------------------------

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward_trace(x)[0]

    def forward_trace(self, x: np.ndarray):
        """Logits plus the per-layer inputs needed for the backward pass."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != self.spec.input_shape:
            raise ValueError(
                f"{self.name}: input shape {x.shape} does not match spec {self.spec.input_shape}")
        trace = []
        cur = x
        for layer, params in zip(self.spec.layers, self.weights):
            trace.append(cur)
            kind = layer[0]
            if kind == "conv":
                cur = ops.conv2d(cur, params[0], layer[3], layer[4])
            elif kind == "relu":
                cur = ops.relu(cur)
            elif kind == "flatten":
                cur = cur.reshape(-1)
            elif kind == "dense":
                cur = ops.dense(cur, params[0], params[1])
        return cur, trace

    def predict(self, x: np.ndarray) -> int:
        # argmax with lowest index on ties
        return int(np.argmax(self.logits(x)))

    def softmax(self, x: np.ndarray) -> np.ndarray:
        return ops.softmax(self.logits(x))

    # -- backward ----------------------------------------------------------

    def backward(self, trace: list, upstream: np.ndarray, want_weight_grads: bool = False,
                 start_layer: int | None = None):
        """Pull a gradient at the output of layer ``start_layer`` (default:
        the last layer) back to the input; optionally collect weight grads."""
        n = len(self.spec.layers)
        if start_layer is None:
            start_layer = n - 1
        wgrads = [None] * n if want_weight_grads else None
        g = upstream
        for i in range(start_layer, -1, -1):
            layer = self.spec.layers[i]
            x_in = trace[i]
            kind = layer[0]
            if kind == "conv":
                gx, gk = ops.conv2d_backward(x_in, self.weights[i][0], layer[3], layer[4], g)
                if want_weight_grads:
                    wgrads[i] = [gk]
                g = gx
            elif kind == "relu":
                g = ops.relu_backward(x_in, g)
            elif kind == "flatten":
                g = g.reshape(x_in.shape)
            elif kind == "dense":
                gx, gw, gb = ops.dense_backward(x_in, self.weights[i][0], g)
                if want_weight_grads:
                    wgrads[i] = [gw, gb]
                g = gx
        return (g, wgrads) if want_weight_grads else g

    def loss_grad_input(self, x: np.ndarray, label: int):
        logits, trace = self.forward_trace(x)
        loss, glog = ops.softmax_cross_entropy(logits, label)
        return loss, self.backward(trace, glog)

    def loss_grads(self, x: np.ndarray, label: int):
        logits, trace = self.forward_trace(x)
        loss, glog = ops.softmax_cross_entropy(logits, label)
        gx, wgrads = self.backward(trace, glog, want_weight_grads=True)
        return loss, gx, wgrads

    # -- feature hooks (guided-denoiser training) ---------------------------

    def top_conv_layer(self) -> int:
        """Index of the activation fed onward from the last conv stage:
        the relu right after the last conv when present, else the conv."""
        conv_idx = [i for i, l in enumerate(self.spec.layers) if l[0] == "conv"]
        if not conv_idx:
            raise ValueError(f"{self.name} has no convolutional layers")
        i = conv_idx[-1]
        if i + 1 < len(self.spec.layers) and self.spec.layers[i + 1][0] == "relu":
            return i + 1
        return i

    def feature_trace(self, x: np.ndarray, layer: int):
        """Activation after ``layer`` plus the trace needed to pull gradients
        from that activation back to the input."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        trace = []
        cur = x
        for i in range(layer + 1):
            trace.append(cur)
            l = self.spec.layers[i]
            if l[0] == "conv":
                cur = ops.conv2d(cur, self.weights[i][0], l[3], l[4])
            elif l[0] == "relu":
                cur = ops.relu(cur)
            elif l[0] == "flatten":
                cur = cur.reshape(-1)
            elif l[0] == "dense":
                cur = ops.dense(cur, self.weights[i][0], self.weights[i][1])
        return cur, trace

    def feature_backward(self, trace: list, upstream: np.ndarray, layer: int) -> np.ndarray:
        return self.backward(trace, upstream, start_layer=layer)

    # -- bookkeeping ---------------------------------------------------------

    def weight_bytes(self) -> bytes:
        buf = io.BytesIO()
        save(self, buf)
        return buf.getvalue()

    def copy(self) -> "Classifier":
        return Classifier(self.name, self.spec, [[a.copy() for a in layer] for layer in self.weights])


def build(spec: ModelSpec, seed: int, name: str = "model") -> Classifier:
    """Initialize weights: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias."""
    weights = []
    for li, shapes in enumerate(_layer_param_shapes(spec)):
        layer_params = []
        for ti, shp in enumerate(shapes):
            rng = Rng(derive_seed(seed, "init", li, ti))
            if len(shp) == 1:
                layer_params.append(np.zeros(shp))
            else:
                fan_in = int(np.prod(shp[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                layer_params.append(rng.uniform_array(shp, -bound, bound))
        weights.append(layer_params)
    return Classifier(name, spec, weights)


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    adv_mode: str = "none"
    adv_fraction: float = 0.5
    adv_epsilon: float = 8.0 / 255.0
    adv_sources: list = field(default_factory=list)   # frozen Classifiers

    def __post_init__(self):
        if self.adv_mode not in ADV_MODES:
            raise ValueError(f"adv_mode must be one of {ADV_MODES}")
        if not 0.0 <= self.adv_fraction <= 1.0:
            raise ValueError("adv_fraction must lie in [0, 1]")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("need lr > 0, epochs >= 0, batch_size >= 1")
        if self.adv_mode == "ensemble_fgsm" and not self.adv_sources:
            raise ValueError("ensemble_fgsm needs at least one frozen source model")


def _fgsm_example(model: Classifier, x: np.ndarray, label: int, eps: float) -> np.ndarray:
    _, gx = model.loss_grad_input(x, label)
    adv = ops.clip01(x + eps * ops.sign(gx))
    return np.clip(adv, x - eps, x + eps)


def train(spec: ModelSpec, records: list, cfg: TrainConfig, name: str = "model") -> Classifier:
    """SGD with momentum over a list of ImageRecords, deterministic per cfg.seed.

    In the adversarial modes the first round(fraction * batch) images of each
    shuffled mini-batch are replaced by FGSM examples at cfg.adv_epsilon,
    generated against the live model (self_fgsm) or against a frozen source
    drawn per batch (ensemble_fgsm).
    """
    model = build(spec, derive_seed(cfg.seed, "init"), name)
    velocity = [[np.zeros_like(a) for a in layer] for layer in model.weights]
    order = list(range(len(records)))
    batch_rng = Rng(derive_seed(cfg.seed, "batch_draws"))
    for epoch in range(cfg.epochs):
        Rng(derive_seed(cfg.seed, "shuffle", epoch)).shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [records[i] for i in order[start:start + cfg.batch_size]]
            n_adv = int(round(cfg.adv_fraction * len(batch))) if cfg.adv_mode != "none" else 0
            if cfg.adv_mode == "ensemble_fgsm":
                source = cfg.adv_sources[batch_rng.randint(len(cfg.adv_sources))]
            grads = None
            for bi, rec in enumerate(batch):
                x = rec.pixels
                if bi < n_adv:
                    src = model if cfg.adv_mode == "self_fgsm" else source
                    x = _fgsm_example(src, x, rec.true_label, cfg.adv_epsilon)
                _, _, wg = model.loss_grads(x, rec.true_label)
                if grads is None:
                    grads = [[g.copy() for g in (layer or [])] for layer in wg]
                else:
                    for acc, new in zip(grads, wg):
                        for a, g in zip(acc, new or []):
                            a += g
            scale = 1.0 / len(batch)
            for li in range(len(model.weights)):
                for ti in range(len(model.weights[li])):
                    g = grads[li][ti] * scale
                    velocity[li][ti] = cfg.momentum * velocity[li][ti] - cfg.lr * g
                    model.weights[li][ti] += velocity[li][ti]
    return model


def accuracy(model: Classifier, records: list) -> float:
    hits = sum(1 for r in records if model.predict(r.pixels) == r.true_label)
    return hits / len(records)


# ---------------------------------------------------------------------------
# Weights container: magic "ADVW", u16 version, length-prefixed spec JSON,
# tensor count, then per tensor u32 rank, u32 extents, float64 LE data.
# All integers little-endian.  Classifiers and denoisers share the container;
# the spec JSON's "kind" field tells them apart.

def write_container(fh_or_path, spec_text: str, tensors: list) -> None:
    own = isinstance(fh_or_path, str)
    fh = open(fh_or_path, "wb") if own else fh_or_path
    try:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<H", WEIGHTS_VERSION))
        raw = spec_text.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            fh.write(struct.pack("<I", t.ndim))
            for ext in t.shape:
                fh.write(struct.pack("<I", ext))
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    finally:
        if own:
            fh.close()


def _need(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise WeightsFormatError(f"truncated weights file while reading {what} "
                                 f"(wanted {n} bytes, got {len(data)})")
    return data


def read_container(fh_or_path):
    """Returns (spec_text, tensors); validates framing, not semantics."""
    own = isinstance(fh_or_path, str)
    fh = open(fh_or_path, "rb") if own else fh_or_path
    try:
        magic = _need(fh, 4, "magic")
        if magic != WEIGHTS_MAGIC:
            raise WeightsFormatError(f"bad magic {magic!r} at offset 0 (expected {WEIGHTS_MAGIC!r})")
        version = struct.unpack("<H", _need(fh, 2, "version"))[0]
        if version != WEIGHTS_VERSION:
            raise WeightsFormatError(f"unsupported weights version {version}")
        spec_len = struct.unpack("<I", _need(fh, 4, "spec length"))[0]
        spec_text = _need(fh, spec_len, "spec text").decode("utf-8")
        n_tensors = struct.unpack("<I", _need(fh, 4, "tensor count"))[0]
        flat = []
        for i in range(n_tensors):
            rank = struct.unpack("<I", _need(fh, 4, f"tensor {i} rank"))[0]
            if rank > 8:
                raise WeightsFormatError(f"tensor {i}: implausible rank {rank}")
            shape = tuple(struct.unpack("<I", _need(fh, 4, f"tensor {i} extent"))[0]
                          for _ in range(rank))
            count = int(np.prod(shape)) if shape else 1
            raw = _need(fh, count * 8, f"tensor {i} data")
            flat.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
        trailing = fh.read(1)
        if trailing:
            raise WeightsFormatError("trailing bytes after final tensor")
    finally:
        if own:
            fh.close()
    return spec_text, flat


def save(model: Classifier, fh_or_path) -> None:
    spec_text = model.spec.to_json(kind=getattr(model, "kind", "classifier"),
                                   name=model.name)
    tensors = [a for layer in model.weights for a in layer]
    write_container(fh_or_path, spec_text, tensors)


def load(fh_or_path) -> Classifier:
    spec_text, flat = read_container(fh_or_path)
    try:
        spec, kind, name = ModelSpec.from_json(spec_text)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise WeightsFormatError(f"invalid spec text: {exc}") from exc
    if kind != "classifier":
        raise WeightsFormatError(f"container holds a {kind!r}, not a classifier")
    expected = _layer_param_shapes(spec)
    weights = []
    it = iter(flat)
    for li, shapes in enumerate(expected):
        layer_params = []
        for shp in shapes:
            try:
                t = next(it)
            except StopIteration:
                raise WeightsFormatError(f"missing tensors for layer {li}") from None
            if t.shape != shp:
                raise WeightsFormatError(
                    f"layer {li}: tensor shape {t.shape} does not match spec shape {shp}")
            layer_params.append(t)
        weights.append(layer_params)
    if any(True for _ in it):
        raise WeightsFormatError("more tensors than the spec declares")
    model = Classifier(name, spec, weights)
    model.kind = kind
    return model


# ---------------------------------------------------------------------------
# Default zoo on 3x32x32 inputs, 10 classes.

IN32 = (3, 32, 32)


def zoo_specs() -> dict:
    return {
        "logreg": ModelSpec(IN32, 10, (("flatten",), ("dense", 10))),
        "mlp2": ModelSpec(IN32, 10, (
            ("flatten",), ("dense", 64), ("relu",), ("dense", 32), ("relu",), ("dense", 10))),
        "cnn_a": ModelSpec(IN32, 10, (
            ("conv", 8, 4, 2, 1), ("relu",),
            ("conv", 16, 4, 2, 1), ("relu",),
            ("flatten",), ("dense", 10))),
        "cnn_b": ModelSpec(IN32, 10, (
            ("conv", 6, 5, 1, 2), ("relu",),
            ("conv", 12, 4, 2, 1), ("relu",),
            ("conv", 12, 4, 2, 1), ("relu",),
            ("flatten",), ("dense", 32), ("relu",), ("dense", 10))),
        "holdout_cnn": ModelSpec(IN32, 10, (
            ("conv", 10, 2, 2, 0), ("relu",),
            ("conv", 20, 2, 2, 0), ("relu",),
            ("flatten",), ("dense", 10))),
    }


ZOO_TRAIN_SETTINGS = {
    "logreg": dict(epochs=24, lr=0.01),
    "mlp2": dict(epochs=40, lr=0.01),
    "cnn_a": dict(epochs=16, lr=0.03),
    "cnn_b": dict(epochs=24, lr=0.03),
    "holdout_cnn": dict(epochs=32, lr=0.04),
    "cnn_a_adv": dict(epochs=24, lr=0.03),
    "cnn_a_ensadv": dict(epochs=24, lr=0.03),
}


def train_zoo(records: list, seed: int = 0, settings: dict | None = None) -> dict:
    """Train the full default zoo; adversarial variants train after their
    frozen sources.  ``settings`` overrides per-model epochs/lr."""
    specs = zoo_specs()
    conf = dict(ZOO_TRAIN_SETTINGS)
    if settings:
        for k, v in settings.items():
            conf[k] = {**conf.get(k, {}), **v}
    zoo = {}
    for name in ("logreg", "mlp2", "cnn_a", "cnn_b", "holdout_cnn"):
        cfg = TrainConfig(seed=derive_seed(seed, name), **conf[name])
        zoo[name] = train(specs[name], records, cfg, name=name)
    adv_cfg = TrainConfig(seed=derive_seed(seed, "cnn_a_adv"),
                          adv_mode="self_fgsm", **conf["cnn_a_adv"])
    zoo["cnn_a_adv"] = train(specs["cnn_a"], records, adv_cfg, name="cnn_a_adv")
    ens_cfg = TrainConfig(seed=derive_seed(seed, "cnn_a_ensadv"),
                          adv_mode="ensemble_fgsm",
                          adv_sources=[zoo["cnn_b"], zoo["mlp2"]],
                          **conf["cnn_a_ensadv"])
    zoo["cnn_a_ensadv"] = train(specs["cnn_a"], records, ens_cfg, name="cnn_a_ensadv")
    return zoo
