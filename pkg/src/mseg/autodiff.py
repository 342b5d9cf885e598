"""Reverse-mode differentiation over the tensor kernels.

A :class:`Tape` records every op executed on :class:`Var` values in
execution order (so inputs always precede their consumers), and
``backward`` replays it once in reverse, summing gradients at fan-out
points.  Plain numpy arrays passed into an op are treated as constants.

Gradient-check paths run in float64; training loops in float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ShapeError


class Tape:
    """Ordered op record plus the set of differentiable leaves."""

    def __init__(self):
        self.nodes = []          # (out_vid, [(in_vid, grad_fn)], cache release hook unused)
        self.params = {}         # vid -> Var
        self._next = 0

    def _new_id(self) -> int:
        self._next += 1
        return self._next

    def var(self, data: np.ndarray) -> "Var":
        return Var(np.asarray(data), self, self._new_id())

    def param(self, data: np.ndarray) -> "Var":
        v = self.var(data)
        self.params[v.vid] = v
        return v

    def record(self, out: "Var", pulls):
        """pulls: list of (input Var, fn(out_grad) -> input grad contribution)."""
        self.nodes.append((out.vid, [(v.vid, fn) for v, fn in pulls]))


@dataclass
class Var:
    data: np.ndarray
    tape: Tape | None
    vid: int

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype


def _tape_of(*xs) -> Tape:
    tapes = {x.tape for x in xs if isinstance(x, Var) and x.tape is not None}
    if len(tapes) > 1:
        raise ShapeError("ops cannot mix Vars from different tapes")
    if not tapes:
        raise ShapeError("at least one op input must be a tape Var")
    return tapes.pop()


def _val(x):
    return x.data if isinstance(x, Var) else x


def _emit(tape: Tape, out_data, pulls) -> Var:
    out = tape.var(out_data)
    tape.record(out, [(v, fn) for v, fn in pulls if isinstance(v, Var)])
    return out


def backward(tape: Tape, loss: Var) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every marked parameter.

    Parameters the loss never touched get zero gradients.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ShapeError("loss must be a Var recorded on this tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {loss.vid: np.ones_like(loss.data)}
    for out_vid, pulls in reversed(tape.nodes):
        g = grads.get(out_vid)
        if g is None:
            continue
        for in_vid, fn in pulls:
            contrib = fn(g)
            if in_vid in grads:
                grads[in_vid] = grads[in_vid] + contrib
            else:
                grads[in_vid] = contrib
    out = {}
    for vid, var in tape.params.items():
        out[vid] = grads.get(vid, np.zeros_like(var.data))
    return out


# ---------------------------------------------------------------------------
# differentiable wrappers over the tensor kernels


def conv2d(x, w, b, spec: ops.ConvSpec) -> Var:
    tape = _tape_of(x, w, b)
    xd, wd = _val(x), _val(w)
    bd = _val(b) if b is not None else None
    ops._check_conv_args(xd, wd, bd, spec)
    n, c, h, wid = xd.shape
    kh, kw = spec.kernel
    g = spec.groups
    cpg, opg = c // g, spec.out_ch // g
    oh, ow = spec.out_size(h, wid)
    cols_m = ops.im2col(xd, spec).reshape(n, g, cpg * kh * kw, oh * ow)  # cached for both grads
    wm = wd.reshape(g, opg, cpg * kh * kw)
    y = np.matmul(wm, cols_m).reshape(n, spec.out_ch, oh, ow)
    if bd is not None:
        y += bd.reshape(1, -1, 1, 1).astype(y.dtype)

    def dx(gout):
        gm = gout.reshape(n, g, opg, oh * ow)
        gcols = np.matmul(wm.transpose(0, 2, 1), gm)  # (n,g,K,L)
        return ops.col2im(gcols.reshape(n, c, kh, kw, oh, ow), xd.shape, spec)

    def dw(gout):
        gm = gout.reshape(n, g, opg, oh * ow)
        gw = np.matmul(gm, cols_m.transpose(0, 1, 3, 2)).sum(axis=0)  # (g,opg,K)
        return gw.reshape(wd.shape)

    pulls = [(x, dx), (w, dw)]
    if b is not None:
        pulls.append((b, lambda gout: gout.sum(axis=(0, 2, 3))))
    return _emit(tape, y, pulls)


def batchnorm_infer(x, gamma, beta, mean, var, eps: float) -> Var:
    tape = _tape_of(x, gamma, beta)
    xd, gd = _val(x), _val(gamma)
    md, vd = _val(mean), _val(var)
    y = ops.batchnorm_infer(xd, gd, _val(beta), md, vd, eps)
    inv = (1.0 / np.sqrt(vd + eps)).astype(xd.dtype)
    xhat = (xd - md.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
    scale = (gd * inv).astype(xd.dtype).reshape(1, -1, 1, 1)
    return _emit(tape, y, [
        (x, lambda g: g * scale),
        (gamma, lambda g: (g * xhat).sum(axis=(0, 2, 3))),
        (beta, lambda g: g.sum(axis=(0, 2, 3))),
    ])


def activation(x, kind: str) -> Var:
    tape = _tape_of(x)
    xd = _val(x)
    y = ops.activation(xd, kind)
    if kind == "relu":
        mask = (xd > 0).astype(xd.dtype)
        pull = lambda g: g * mask
    elif kind == "relu6":
        mask = ((xd > 0) & (xd < 6)).astype(xd.dtype)
        pull = lambda g: g * mask
    else:  # sigmoid
        pull = lambda g: g * y * (1 - y)
    return _emit(tape, y, [(x, pull)])


def maxpool2d(x, kernel, stride, padding=(0, 0)) -> Var:
    tape = _tape_of(x)
    xd = _val(x)
    cols = ops.pool_windows(xd, kernel, stride, padding)
    n, c, kh, kw, oh, ow = cols.shape
    flat = cols.reshape(n, c, kh * kw, oh, ow)
    idx = flat.argmax(axis=2)
    y = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def dx(g):
        gcols = np.zeros_like(flat)
        np.put_along_axis(gcols, idx[:, :, None], g[:, :, None], axis=2)
        spec = ops.ConvSpec(c, c, kernel=tuple(kernel), stride=tuple(stride), padding=tuple(padding))
        return ops.col2im(gcols.reshape(cols.shape), xd.shape, spec)

    return _emit(tape, y, [(x, dx)])


def _interp_matrix(in_size, out_size, align_corners, dtype):
    i0, i1, w1 = ops.resize_coords(in_size, out_size, align_corners)
    m = np.zeros((out_size, in_size), dtype=dtype)
    np.add.at(m, (np.arange(out_size), i0), 1.0 - w1)
    np.add.at(m, (np.arange(out_size), i1), w1)
    return m


def upsample_bilinear(x, out_h: int, out_w: int, align_corners: bool = False) -> Var:
    tape = _tape_of(x)
    xd = _val(x)
    y = ops.upsample_bilinear(xd, out_h, out_w, align_corners)
    h, w = xd.shape[2:]
    r = _interp_matrix(h, out_h, align_corners, xd.dtype)
    c = _interp_matrix(w, out_w, align_corners, xd.dtype)
    # adjoint of the separable linear map y = R x C^T
    return _emit(tape, y, [(x, lambda g: np.matmul(r.T, np.matmul(g, c)))])


def ewise(a, b, kind: str) -> Var:
    tape = _tape_of(a, b)
    ad, bd = _val(a), _val(b)
    y = ops.ewise(ad, bd, kind)
    if kind == "mul":
        pulls = [(a, lambda g: g * bd), (b, lambda g: g * ad)]
    else:
        pulls = [(a, lambda g: g), (b, lambda g: g)]
    return _emit(tape, y, pulls)


def concat_channels(xs) -> Var:
    xs = list(xs)
    tape = _tape_of(*xs)
    vals = [_val(x) for x in xs]
    y = ops.concat_channels(vals)
    pulls, start = [], 0
    for x, v in zip(xs, vals):
        lo, hi = start, start + v.shape[1]
        pulls.append((x, lambda g, lo=lo, hi=hi: g[:, lo:hi]))
        start = hi
    return _emit(tape, y, pulls)


def sum_all(x) -> Var:
    tape = _tape_of(x)
    xd = _val(x)
    return _emit(tape, np.asarray(xd.sum()), [(x, lambda g: np.ones_like(xd) * g)])


def add_scalar_vars(a: Var, b: Var) -> Var:
    tape = _tape_of(a, b)
    return _emit(tape, _val(a) + _val(b), [(a, lambda g: g), (b, lambda g: g)])


# ---------------------------------------------------------------------------
# segmentation loss


def _check_seg_pair(logits, target):
    ld, td = _val(logits), np.asarray(_val(target))
    if ld.shape != td.shape:
        raise ShapeError(f"logits shape {ld.shape} != target shape {td.shape}")
    if ld.ndim != 4 or ld.shape[1] != 1:
        raise ShapeError(f"segmentation loss expects single-channel (n,1,h,w), got {ld.shape}")
    if not np.all((td == 0) | (td == 1)):
        raise ShapeError("target must contain only {0,1} values")
    return ld, td


def bce_logits_mean(logits, target) -> Var:
    """Mean binary cross-entropy on logits: mean(softplus(x) - x*t)."""
    tape = _tape_of(logits)
    ld, td = _check_seg_pair(logits, target)
    loss = np.asarray(np.mean(np.logaddexp(0.0, ld) - ld * td))
    n = ld.size
    return _emit(tape, loss, [(logits, lambda g: g * (ops._sigmoid(ld) - td) / n)])


def soft_dice(logits, target, smooth: float = 1.0) -> Var:
    """1 - (2*sum(p*t)+s) / (sum(p)+sum(t)+s) with p = sigmoid(logits)."""
    tape = _tape_of(logits)
    ld, td = _check_seg_pair(logits, target)
    p = ops._sigmoid(ld)
    a = 2.0 * float((p * td).sum()) + smooth
    b = float(p.sum()) + float(td.sum()) + smooth
    loss = np.asarray(1.0 - a / b)

    def dx(g):
        dp = (a - 2.0 * td * b) / (b * b)
        return g * dp * p * (1 - p)

    return _emit(tape, loss, [(logits, dx)])


def loss_seg(logits, target, smooth: float = 1.0) -> Var:
    """BCE-with-logits plus soft dice, equal weights."""
    return add_scalar_vars(bce_logits_mean(logits, target), soft_dice(logits, target, smooth))


# ---------------------------------------------------------------------------
# finite differences (oracle)


def finite_diff(f, params: dict[str, np.ndarray], eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of a scalar f(params) w.r.t. every element.

    ``f`` must be deterministic; params are float64 copies perturbed one
    element at a time.
    """
    if eps <= 0:
        raise ShapeError("finite_diff eps must be positive")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(f(work))
            flat[i] = keep - eps
            lo = float(f(work))
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimState:
    kind: str                       # "sgd" | "adam"
    lr: float
    momentum: float = 0.0           # sgd only
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    slots: dict = field(default_factory=dict)   # name -> per-param state

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ShapeError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0 and self.lr != 0.0:
            raise ShapeError("learning rate must be >= 0")


def sgd(lr: float, momentum: float = 0.0) -> OptimState:
    return OptimState("sgd", lr, momentum=momentum)


def adam(lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> OptimState:
    return OptimState("adam", lr, betas=betas, eps=eps)


def optimizer_step(state: OptimState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One in-place update over every parameter; returns (params, state)."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ShapeError(f"missing gradients for params: {sorted(missing)}")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} for {name!r}")
        if state.kind == "sgd":
            if state.momentum:
                buf = state.slots.setdefault(name, np.zeros_like(p))
                buf *= state.momentum
                buf += g
                g = buf
            p -= state.lr * g
        else:
            slot = state.slots.setdefault(name, {"m": np.zeros_like(p), "v": np.zeros_like(p)})
            b1, b2 = state.betas
            slot["m"] = b1 * slot["m"] + (1 - b1) * g
            slot["v"] = b2 * slot["v"] + (1 - b2) * (g * g)
            mhat = slot["m"] / (1 - b1 ** t)
            vhat = slot["v"] / (1 - b2 ** t)
            p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state
