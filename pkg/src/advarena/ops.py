"""Differentiable image/tensor operations with explicit backward passes.

All tensors are float64 numpy arrays; images are (C, H, W).  There is no
autograd graph: every op that participates in gradients has a hand-written
adjoint, and the linear ops satisfy the adjoint identity
<A x, y> == <x, A^T y> to rounding error.  Operations are deterministic and
reject non-finite inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels

__all__ = [
    "WarpParams", "conv2d", "conv2d_backward", "dense", "dense_backward",
    "relu", "relu_backward", "sign", "clip01", "clip_range", "round_nearest",
    "softmax", "softmax_cross_entropy", "bilinear_resize",
    "bilinear_resize_backward", "projective_warp", "projective_warp_backward",
    "median_filter_2x2", "pad_zero", "pad_zero_backward", "hflip",
    "upsample2_nearest", "upsample2_nearest_backward", "concat_channels",
    "split_channels_backward",
]


def _as_f64(a, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class WarpParams:
    """Projective transform with 8 parameters.

    Output pixel (x, y) samples the source location
    ((t0*x + t1*y + t2)/k, (t3*x + t4*y + t5)/k) with k = t6*x + t7*y + 1,
    so the identity is (1, 0, 0, 0, 1, 0, 0, 0).  The implied 3x3 homography
    (bottom-right entry fixed at 1) must be invertible.
    """

    theta: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.theta)
        if len(t) != 8:
            raise ValueError("WarpParams needs exactly 8 parameters")
        if not all(np.isfinite(t)):
            raise ValueError("WarpParams contains non-finite values")
        object.__setattr__(self, "theta", t)
        if abs(np.linalg.det(self.matrix())) <= 1e-9:
            raise ValueError("degenerate homography: |det| <= 1e-9")

    def matrix(self) -> np.ndarray:
        t = self.theta
        return np.array([[t[0], t[1], t[2]],
                         [t[3], t[4], t[5]],
                         [t[6], t[7], 1.0]])

    @staticmethod
    def identity() -> "WarpParams":
        return WarpParams((1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0))


def _conv_out_extent(n: int, k: int, stride: int, pad: int) -> int:
    num = n + 2 * pad - k
    if num < 0 or num % stride != 0:
        raise ValueError(
            f"conv2d geometry invalid: (n={n} + 2*pad={pad} - k={k}) not divisible by stride={stride}")
    out = num // stride + 1
    if out <= 0:
        raise ValueError("conv2d geometry yields empty output")
    return out


def conv2d(x, kern, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Multichannel cross-correlation of x (C,H,W) with kernels (O,C,k,k)."""
    x = _as_f64(x, "conv2d input")
    kern = _as_f64(kern, "conv2d kernels")
    if x.ndim != 3 or kern.ndim != 4:
        raise ValueError("conv2d expects x (C,H,W) and kernels (O,C,k,k)")
    if kern.shape[2] != kern.shape[3]:
        raise ValueError("conv2d kernels must be square")
    if kern.shape[1] != x.shape[0]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[0]}, kernels expect {kern.shape[1]}")
    if stride < 1 or pad < 0:
        raise ValueError("conv2d needs stride >= 1 and pad >= 0")
    _conv_out_extent(x.shape[1], kern.shape[2], stride, pad)
    _conv_out_extent(x.shape[2], kern.shape[2], stride, pad)
    return kernels.conv2d_forward(x, kern, stride, pad)


def conv2d_backward(x, kern, stride: int, pad: int, upstream):
    """Gradients of sum(upstream * conv2d(x, kern)) wrt x and kern."""
    x = _as_f64(x, "conv2d input")
    kern = _as_f64(kern, "conv2d kernels")
    upstream = _as_f64(upstream, "conv2d upstream")
    gx = kernels.conv2d_backward_input(
        kern, upstream, x.shape[0], x.shape[1], x.shape[2], stride, pad)
    gk = kernels.conv2d_backward_kernels(x, upstream, kern.shape[2], stride, pad)
    return gx, gk


def dense(x, w, b) -> np.ndarray:
    """Affine map w @ x + b with w (m,n), x (n,), b (m,)."""
    x = _as_f64(x, "dense input")
    w = _as_f64(w, "dense weights")
    b = _as_f64(b, "dense bias")
    if x.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise ValueError("dense expects x (n,), w (m,n), b (m,)")
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ValueError(
            f"dense shape mismatch: w {w.shape}, x {x.shape}, b {b.shape}")
    return w @ x + b


def dense_backward(x, w, upstream):
    """Gradients of sum(upstream * dense(x, w, b)) wrt x, w, b."""
    x = _as_f64(x, "dense input")
    w = _as_f64(w, "dense weights")
    u = _as_f64(upstream, "dense upstream")
    return w.T @ u, np.outer(u, x), u.copy()


def relu(x) -> np.ndarray:
    return np.maximum(_as_f64(x, "relu input"), 0.0)


def relu_backward(x, upstream) -> np.ndarray:
    # Subgradient 0 at exactly 0.
    x = _as_f64(x, "relu input")
    return np.where(x > 0.0, _as_f64(upstream, "relu upstream"), 0.0)


def sign(x) -> np.ndarray:
    return np.sign(_as_f64(x, "sign input"))


def clip01(x) -> np.ndarray:
    return np.clip(_as_f64(x, "clip01 input"), 0.0, 1.0)


def clip_range(x, lo: float, hi: float) -> np.ndarray:
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"clip_range needs finite lo <= hi, got [{lo}, {hi}]")
    return np.clip(_as_f64(x, "clip_range input"), lo, hi)


def round_nearest(x) -> np.ndarray:
    """Round to nearest integer (ties to even, IEEE default)."""
    return np.rint(_as_f64(x, "round input"))


def softmax(logits) -> np.ndarray:
    z = _as_f64(logits, "softmax logits")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits, label: int):
    """Loss -log softmax(logits)[label] and its gradient wrt logits."""
    z = _as_f64(logits, "cross-entropy logits")
    if z.ndim != 1:
        raise ValueError("softmax_cross_entropy expects a logit vector")
    if not 0 <= label < z.shape[0]:
        raise ValueError(f"label {label} out of range for {z.shape[0]} classes")
    shifted = z - z.max()
    logsumexp = np.log(np.exp(shifted).sum())
    loss = float(logsumexp - shifted[label])
    grad = np.exp(shifted - logsumexp)
    grad[label] -= 1.0
    return loss, grad


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of (C,H,W) to (C,out_h,out_w)."""
    x = _as_f64(x, "resize input")
    if x.ndim != 3:
        raise ValueError("bilinear_resize expects (C,H,W)")
    if out_h < 1 or out_w < 1:
        raise ValueError("bilinear_resize target extents must be >= 1")
    if out_h == x.shape[1] and out_w == x.shape[2]:
        return x.copy()
    return kernels.resize_forward(x, out_h, out_w)


def bilinear_resize_backward(upstream, in_h: int, in_w: int) -> np.ndarray:
    """Exact transpose of bilinear_resize onto the (C,in_h,in_w) input."""
    u = _as_f64(upstream, "resize upstream")
    if u.shape[1] == in_h and u.shape[2] == in_w:
        return u.copy()
    return kernels.resize_backward(u, in_h, in_w)


def projective_warp(x, params: WarpParams) -> np.ndarray:
    """Warp (C,H,W) by a homography; out-of-bounds samples read as zero."""
    x = _as_f64(x, "warp input")
    if x.ndim != 3:
        raise ValueError("projective_warp expects (C,H,W)")
    if params.theta == WarpParams.identity().theta:
        return x.copy()
    return kernels.warp_forward(x, np.asarray(params.theta))


def projective_warp_backward(upstream, params: WarpParams,
                             in_h: int, in_w: int) -> np.ndarray:
    """Exact transpose of projective_warp for fixed params."""
    u = _as_f64(upstream, "warp upstream")
    if params.theta == WarpParams.identity().theta and u.shape[1] == in_h and u.shape[2] == in_w:
        return u.copy()
    return kernels.warp_backward(u, np.asarray(params.theta), in_h, in_w)


def median_filter_2x2(x) -> np.ndarray:
    """2x2 window median per channel; bottom/right edges replicate."""
    x = _as_f64(x, "median input")
    if x.ndim != 3:
        raise ValueError("median_filter_2x2 expects (C,H,W)")
    return kernels.median_filter_2x2(x)


def pad_zero(x, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    x = _as_f64(x, "pad input")
    if min(left, right, top, bottom) < 0:
        raise ValueError("pad_zero amounts must be >= 0")
    return np.pad(x, ((0, 0), (top, bottom), (left, right)))


def pad_zero_backward(upstream, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    u = _as_f64(upstream, "pad upstream")
    h, w = u.shape[1], u.shape[2]
    return np.ascontiguousarray(u[:, top:h - bottom or None, left:w - right or None])


def hflip(x) -> np.ndarray:
    """Mirror (C,H,W) across the vertical axis."""
    return np.ascontiguousarray(_as_f64(x, "hflip input")[:, :, ::-1])


def upsample2_nearest(x) -> np.ndarray:
    x = _as_f64(x, "upsample input")
    return np.ascontiguousarray(x.repeat(2, axis=1).repeat(2, axis=2))


def upsample2_nearest_backward(upstream) -> np.ndarray:
    u = _as_f64(upstream, "upsample upstream")
    c, h, w = u.shape
    return u.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


def concat_channels(a, b) -> np.ndarray:
    return np.concatenate([_as_f64(a, "concat a"), _as_f64(b, "concat b")], axis=0)


def split_channels_backward(upstream, n_first: int):
    u = _as_f64(upstream, "concat upstream")
    return np.ascontiguousarray(u[:n_first]), np.ascontiguousarray(u[n_first:])
