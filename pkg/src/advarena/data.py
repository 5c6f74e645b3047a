"""Procedural image dataset, PPM image files, and split metadata.

Ten shape classes are rendered onto noisy backgrounds with seeded jitter in
position, scale, color, and pattern phase, then quantized to the 1/255
pixel grid so every image round-trips bit-exactly through 8-bit files.
Splits are balanced and fully determined by (n_classes, n_per_class, size,
seed).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .rng import Rng, derive_seed

CLASS_NAMES = [
    "filled_circle", "ring", "square", "diamond", "triangle",
    "hstripes", "vstripes", "checkerboard", "cross", "gradient_disk",
]

SPLIT_NAMES = ("train", "dev", "final")

DEV_SIZE = 100
FINAL_SIZE = 500


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    pixels: np.ndarray          # (3, H, W) float64 on the 1/255 grid
    true_label: int
    target_label: int | None = None


@dataclass
class DatasetSplit:
    name: str
    seed: int
    records: list


def _soft_mask(signed: np.ndarray, width: float = 1.0) -> np.ndarray:
    # signed > 0 inside the shape; one-pixel soft edge.
    return np.clip(signed / width + 0.5, 0.0, 1.0)


def _render(label: int, size: int, rng: Rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = size / 2.0 + rng.uniform(-3.0, 3.0)
    cy = size / 2.0 + rng.uniform(-3.0, 3.0)
    r = size * rng.uniform(0.20, 0.34)
    fg = np.array([rng.uniform(0.55, 1.0) for _ in range(3)])
    bg_base = np.array([rng.uniform(0.05, 0.30) for _ in range(3)])
    noise = rng.uniform_array((3, size, size), -0.06, 0.06)
    dx = xx - cx
    dy = yy - cy
    dist = np.sqrt(dx * dx + dy * dy)
    shade = 1.0

    name = CLASS_NAMES[label]
    if name == "filled_circle":
        mask = _soft_mask(r - dist)
    elif name == "ring":
        band = r * rng.uniform(0.22, 0.34)
        mask = _soft_mask(band - np.abs(dist - r * 0.8))
    elif name == "square":
        mask = _soft_mask(r * 0.85 - np.maximum(np.abs(dx), np.abs(dy)))
    elif name == "diamond":
        mask = _soft_mask(r * 1.1 - (np.abs(dx) + np.abs(dy)))
    elif name == "triangle":
        # Upward triangle: below the two slanted edges, above the base.
        top = cy - r
        base = cy + r * 0.75
        s1 = (yy - top) - 1.9 * (cx - xx)   # right of the left edge
        s2 = (yy - top) - 1.9 * (xx - cx)   # left of the right edge
        s3 = base - yy                       # above the base
        mask = _soft_mask(np.minimum(np.minimum(s1, s2), s3) / 1.5)
    elif name == "hstripes":
        period = rng.uniform(5.0, 9.0)
        phase = rng.uniform(0.0, period)
        wave = np.sin(2.0 * np.pi * (yy - phase) / period)
        mask = _soft_mask(wave * period / (2.0 * np.pi))
    elif name == "vstripes":
        period = rng.uniform(5.0, 9.0)
        phase = rng.uniform(0.0, period)
        wave = np.sin(2.0 * np.pi * (xx - phase) / period)
        mask = _soft_mask(wave * period / (2.0 * np.pi))
    elif name == "checkerboard":
        cell = rng.uniform(5.0, 8.0)
        px = rng.uniform(0.0, cell)
        py = rng.uniform(0.0, cell)
        wx = np.sin(np.pi * (xx - px) / cell)
        wy = np.sin(np.pi * (yy - py) / cell)
        mask = _soft_mask(wx * wy * cell / np.pi)
    elif name == "cross":
        bar = r * rng.uniform(0.28, 0.42)
        arm = r * 1.15
        horiz = np.minimum(bar - np.abs(dy), arm - np.abs(dx))
        vert = np.minimum(bar - np.abs(dx), arm - np.abs(dy))
        mask = _soft_mask(np.maximum(horiz, vert))
    elif name == "gradient_disk":
        mask = _soft_mask(r - dist)
        shade = np.clip(1.0 - dist / (r * 1.15), 0.0, 1.0)
    else:
        raise ValueError(f"no renderer for class {label}")

    img = bg_base[:, None, None] + noise
    img = img * (1.0 - mask) + (fg[:, None, None] * shade) * mask
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def generate(n_classes: int = 10, n_per_class: int = 10, size: int = 32,
             seed: int = 0, name: str = "dev") -> DatasetSplit:
    """Render a balanced split of n_classes * n_per_class images."""
    if not 2 <= n_classes <= len(CLASS_NAMES):
        raise ValueError(f"n_classes must be in [2, {len(CLASS_NAMES)}]")
    if n_per_class < 1 or size < 8:
        raise ValueError("need n_per_class >= 1 and size >= 8")
    order = [c for c in range(n_classes) for _ in range(n_per_class)]
    Rng(derive_seed(seed, "order")).shuffle(order)
    records = []
    per_class_counter = [0] * n_classes
    for idx, label in enumerate(order):
        k = per_class_counter[label]
        per_class_counter[label] += 1
        rng = Rng(derive_seed(seed, "image", label, k))
        pixels = _render(label, size, rng)
        records.append(ImageRecord(f"{name}_{idx:05d}", pixels, label))
    return DatasetSplit(name, seed, records)


def assign_targets(split: DatasetSplit, seed: int) -> DatasetSplit:
    """Attach a uniformly drawn target class != true class to each record."""
    labels = {r.true_label for r in split.records}
    n_classes = max(labels) + 1
    if n_classes < 2:
        raise ValueError("target assignment needs at least 2 classes")
    rng = Rng(derive_seed(seed, "targets", split.name))
    out = []
    for rec in split.records:
        draw = rng.randint(n_classes - 1)
        target = draw if draw < rec.true_label else draw + 1
        out.append(replace(rec, target_label=target))
    return DatasetSplit(split.name, split.seed, out)


# ---------------------------------------------------------------------------
# Binary P6 PPM files, maxval 255.

def write_image(path: str, pixels: np.ndarray) -> None:
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError("write_image expects (3, H, W)")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("write_image expects pixels in [0, 1]")
    _, h, w = arr.shape
    raw = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(raw.tobytes())


def _read_token(fh) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated PPM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_image(path: str) -> np.ndarray:
    """Read a binary P6 PPM into a (3, H, W) float64 array on the 1/255 grid."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != b"P6":
            raise ValueError(f"{path}: not a P6 PPM (magic {magic!r})")
        try:
            w = int(_read_token(fh))
            h = int(_read_token(fh))
            maxval = int(_read_token(fh))
        except ValueError as exc:
            raise ValueError(f"{path}: malformed PPM header: {exc}") from exc
        if w <= 0 or h <= 0:
            raise ValueError(f"{path}: bad PPM extents {w}x{h}")
        if maxval != 255:
            raise ValueError(f"{path}: unsupported maxval {maxval} (need 255)")
        payload = fh.read(w * h * 3)
        if len(payload) != w * h * 3:
            raise ValueError(
                f"{path}: truncated PPM payload, expected {w * h * 3} bytes got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Split directories: one PPM per image plus metadata.csv.

def write_split(split: DatasetSplit, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "metadata.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_id", "true_label", "target_label"])
        for rec in split.records:
            write_image(os.path.join(directory, rec.image_id + ".ppm"), rec.pixels)
            tgt = "" if rec.target_label is None else rec.target_label
            wr.writerow([rec.image_id, rec.true_label, tgt])


def load_split(directory: str, name: str | None = None) -> DatasetSplit:
    meta = os.path.join(directory, "metadata.csv")
    if not os.path.exists(meta):
        raise FileNotFoundError(f"no metadata.csv under {directory}")
    records = []
    with open(meta, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["image_id", "true_label", "target_label"]:
            raise ValueError(f"{meta}: unexpected header {header}")
        for row in rd:
            image_id, true_s, tgt_s = row
            pixels = read_image(os.path.join(directory, image_id + ".ppm"))
            target = int(tgt_s) if tgt_s else None
            records.append(ImageRecord(image_id, pixels, int(true_s), target))
    if name is None:
        name = os.path.basename(os.path.normpath(directory))
    return DatasetSplit(name, -1, records)
