"""Dense NCHW tensor kernels.

Every feature map in the engine is a plain numpy array of shape
``(n, c, h, w)``, C-contiguous, float32 on inference paths and float64 on
gradient-check paths.  All functions here are pure: same inputs give
bit-identical outputs, and nothing is mutated.

``conv2d`` is the production path (im2col + BLAS matmul); ``conv2d_naive``
is the seven-loop reference kept permanently as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

ACTIVATIONS = ("relu", "relu6", "sigmoid")
EWISE_KINDS = ("mul", "add")


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a 2-D cross-correlation."""

    in_ch: int
    out_ch: int
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if self.in_ch < 1 or self.out_ch < 1:
            raise ShapeError(f"conv channels must be positive, got in_ch={self.in_ch} out_ch={self.out_ch}")
        if self.groups < 1 or self.in_ch % self.groups or self.out_ch % self.groups:
            raise ShapeError(
                f"groups={self.groups} must divide in_ch={self.in_ch} and out_ch={self.out_ch}"
            )
        for name in ("kernel", "stride", "dilation"):
            a, b = getattr(self, name)
            if a < 1 or b < 1:
                raise ShapeError(f"conv {name} must be >= 1, got {(a, b)}")
        if min(self.padding) < 0:
            raise ShapeError(f"conv padding must be >= 0, got {self.padding}")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_ch, self.in_ch // self.groups, *self.kernel)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        """Output spatial size; raises if it would be empty."""
        (kh, kw), (sh, sw) = self.kernel, self.stride
        (ph, pw), (dh, dw) = self.padding, self.dilation
        oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        ow = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"conv output would be {oh}x{ow} for input {h}x{w} "
                f"(kernel={self.kernel} stride={self.stride} padding={self.padding} dilation={self.dilation})"
            )
        return oh, ow


def check_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D (n,c,h,w) array, got ndim={getattr(x, 'ndim', None)}")
    return x


def _check_conv_args(x, w, b, spec: ConvSpec):
    check_tensor4(x, "conv input")
    check_tensor4(w, "conv weight")
    if x.shape[1] != spec.in_ch:
        raise ShapeError(f"conv input has {x.shape[1]} channels, spec.in_ch={spec.in_ch}")
    if w.shape != spec.weight_shape:
        raise ShapeError(f"conv weight shape {w.shape} does not match spec {spec.weight_shape}")
    if b is not None:
        b = np.asarray(b)
        if b.shape != (spec.out_ch,):
            raise ShapeError(f"conv bias shape {b.shape} must be ({spec.out_ch},)")
    return b


def im2col(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Gather every receptive-field tap into ``(n, c, kh, kw, oh, ow)``.

    Only kh*kw slice copies regardless of image size, so the heavy work
    stays inside numpy.  Shared by the forward conv and its gradients.
    """
    n, c, h, w = x.shape
    (kh, kw), (sh, sw) = spec.kernel, spec.stride
    (ph, pw), (dh, dw) = spec.padding, spec.dilation
    oh, ow = spec.out_size(h, w)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            r, q = i * dh, j * dw
            cols[:, :, i, j] = xp[:, :, r : r + sh * oh : sh, q : q + sw * ow : sw]
    return cols


def col2im(cols: np.ndarray, x_shape, spec: ConvSpec) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add taps back onto the image."""
    n, c, h, w = x_shape
    (kh, kw), (sh, sw) = spec.kernel, spec.stride
    (ph, pw), (dh, dw) = spec.padding, spec.dilation
    oh, ow = cols.shape[-2:]
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            r, q = i * dh, j * dw
            xp[:, :, r : r + sh * oh : sh, q : q + sw * ow : sw] += cols[:, :, i, j]
    return xp[:, :, ph : ph + h, pw : pw + w] if (ph or pw) else xp


def conv2d(x: np.ndarray, w: np.ndarray, b, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation via im2col + one batched BLAS matmul per call."""
    b = _check_conv_args(x, w, b, spec)
    n, c, h, wd = x.shape
    kh, kw = spec.kernel
    oh, ow = spec.out_size(h, wd)
    g = spec.groups
    cpg, opg = c // g, spec.out_ch // g
    cols = im2col(x, spec).reshape(n, g, cpg * kh * kw, oh * ow)
    wm = w.reshape(g, opg, cpg * kh * kw)
    out = np.matmul(wm, cols).reshape(n, spec.out_ch, oh, ow)
    if b is not None:
        out += b.reshape(1, -1, 1, 1).astype(out.dtype)
    return out


def conv2d_naive(x: np.ndarray, w: np.ndarray, b, spec: ConvSpec) -> np.ndarray:
    """Direct seven-loop cross-correlation: the reference semantics.

    Deliberately scalar so its correctness is auditable by eye; used as
    the oracle for :func:`conv2d` and kept out of all hot paths.
    """
    b = _check_conv_args(x, w, b, spec)
    n, c, h, wd = x.shape
    (kh, kw), (sh, sw) = spec.kernel, spec.stride
    (ph, pw), (dh, dw) = spec.padding, spec.dilation
    oh, ow = spec.out_size(h, wd)
    g = spec.groups
    cpg, opg = c // g, spec.out_ch // g
    out = np.zeros((n, spec.out_ch, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for oc in range(spec.out_ch):
            base_c = (oc // opg) * cpg
            bias = 0.0 if b is None else float(b[oc])
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ic in range(cpg):
                        for ky in range(kh):
                            iy = oy * sh - ph + ky * dh
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * sw - pw + kx * dw
                                if 0 <= ix < wd:
                                    acc += float(x[ni, base_c + ic, iy, ix]) * float(w[oc, ic, ky, kx])
                    out[ni, oc, oy, ox] = acc + bias
    return out


def batchnorm_infer(x, gamma, beta, mean, var, eps: float) -> np.ndarray:
    """Frozen-statistics batch norm: y = gamma*(x-mean)/sqrt(var+eps) + beta."""
    check_tensor4(x, "batchnorm input")
    c = x.shape[1]
    gamma, beta, mean, var = (np.asarray(v) for v in (gamma, beta, mean, var))
    for name, v in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        if v.shape != (c,):
            raise ShapeError(f"batchnorm {name} shape {v.shape} must be ({c},) for {c}-channel input")
    denom = var + eps
    if np.any(denom <= 0):
        raise ShapeError(f"batchnorm var+eps must be positive, min={denom.min()}")
    scale = (gamma / np.sqrt(denom)).astype(x.dtype)
    shift = (beta - mean * scale).astype(x.dtype)
    return x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1)


def batchnorm_fold(conv_w, conv_b, gamma, beta, mean, var, eps: float):
    """Fold a trailing batch norm into the preceding conv's (w, b).

    conv2d(x, w', b') == batchnorm_infer(conv2d(x, w, b)) for all x.
    """
    conv_w = check_tensor4(np.asarray(conv_w), "conv weight")
    oc = conv_w.shape[0]
    gamma, beta, mean, var = (np.asarray(v) for v in (gamma, beta, mean, var))
    for name, v in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        if v.shape != (oc,):
            raise ShapeError(f"batchnorm {name} shape {v.shape} must be ({oc},) to fold into {oc}-filter conv")
    denom = var + eps
    if np.any(denom <= 0):
        raise ShapeError(f"batchnorm var+eps must be positive, min={denom.min()}")
    scale = gamma / np.sqrt(denom)
    w2 = conv_w * scale.reshape(-1, 1, 1, 1).astype(conv_w.dtype)
    b0 = np.zeros(oc, dtype=conv_w.dtype) if conv_b is None else np.asarray(conv_b)
    b2 = (beta + (b0 - mean) * scale).astype(conv_w.dtype)
    return w2, b2


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "relu6":
        return np.minimum(np.maximum(x, 0), x.dtype.type(6))
    if kind == "sigmoid":
        return _sigmoid(np.asarray(x))
    raise ShapeError(f"unknown activation kind {kind!r}, expected one of {ACTIVATIONS}")


def pool_windows(x: np.ndarray, kernel, stride, padding) -> np.ndarray:
    """Max-pool windows as ``(n, c, kh, kw, oh, ow)`` with -inf padding."""
    check_tensor4(x, "maxpool input")
    kh, kw = kernel
    n, c, h, w = x.shape
    if kh > h + 2 * padding[0] or kw > w + 2 * padding[1]:
        raise ShapeError(f"maxpool kernel {kernel} larger than padded input {h}x{w} + padding {padding}")
    spec = ConvSpec(c, c, kernel=tuple(kernel), stride=tuple(stride), padding=tuple(padding), groups=1)
    ph, pw = padding
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
        spec = ConvSpec(c, c, kernel=tuple(kernel), stride=tuple(stride), padding=(0, 0))
    return im2col(x, spec)


def maxpool2d(x: np.ndarray, kernel, stride, padding=(0, 0)) -> np.ndarray:
    cols = pool_windows(x, kernel, stride, padding)
    return cols.max(axis=(2, 3))


def resize_coords(in_size: int, out_size: int, align_corners: bool):
    """Per-output source index pairs and the lerp weight toward the upper one.

    align_corners=False uses half-pixel centers: src = (dst+0.5)*scale - 0.5,
    clamped into the valid range.
    """
    dst = np.arange(out_size, dtype=np.float64)
    if align_corners:
        src = dst * ((in_size - 1) / (out_size - 1)) if out_size > 1 else np.zeros_like(dst)
    else:
        src = (dst + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    return i0, i1, src - i0


def upsample_bilinear(x: np.ndarray, out_h: int, out_w: int, align_corners: bool = False) -> np.ndarray:
    """Separable bilinear resize.

    Lerps are written as ``a + w*(b-a)`` so constants and identity resizes
    reproduce exactly, not merely to rounding.
    """
    check_tensor4(x, "upsample input")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"upsample target must be >= 1, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    i0, i1, wr = resize_coords(h, out_h, align_corners)
    j0, j1, wc = resize_coords(w, out_w, align_corners)
    wr = wr.astype(x.dtype).reshape(1, 1, out_h, 1)
    wc = wc.astype(x.dtype).reshape(1, 1, 1, out_w)
    r0, r1 = x[:, :, i0, :], x[:, :, i1, :]
    rows = r0 + wr * (r1 - r0)
    c0, c1 = rows[:, :, :, j0], rows[:, :, :, j1]
    return c0 + wc * (c1 - c0)


def ewise(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise mul/add; shapes must match exactly (no broadcasting)."""
    if a.shape != b.shape:
        raise ShapeError(f"ewise operands differ in shape: {a.shape} vs {b.shape}")
    if kind == "mul":
        return a * b
    if kind == "add":
        return a + b
    raise ShapeError(f"unknown ewise kind {kind!r}, expected one of {EWISE_KINDS}")


def concat_channels(xs) -> np.ndarray:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels needs at least one input")
    ref = xs[0].shape
    for i, x in enumerate(xs[1:], 1):
        check_tensor4(x, f"concat input {i}")
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError(f"concat input {i} shape {x.shape} mismatches {ref} outside the channel dim")
    return np.concatenate(xs, axis=1)
