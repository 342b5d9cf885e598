"""Desk-scale training loop over the synthetic blob task.

Two policies mirror the full-scale recipes: sgd-policy (SGD, lr 1e-2,
random horizontal/vertical flips) and adam-policy (Adam, lr 1e-4, no
augmentation).  The harness validates the training machinery end to end;
it makes no accuracy claim beyond the toy task.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import graph as G
from . import metrics
from .decoder import build_preset_model
from .errors import NumericError, ShapeError
from .synthblobs import BlobDataset

POLICIES = ("sgd-policy", "adam-policy")
SCALES = ("tiny", "small")
HEAD_DAMP = 0.1   # shrink the logit head init so training starts unsaturated


@dataclass
class TrainResult:
    weights: dict[str, np.ndarray]
    train_loss: list[float]
    report: metrics.MetricReport
    meta: dict = field(default_factory=dict)


def _make_optimizer(policy: str, lr_override):
    if policy == "sgd-policy":
        lr = 1e-2 if lr_override is None else lr_override
        return ad.sgd(lr=lr), lr
    lr = 1e-4 if lr_override is None else lr_override
    return ad.adam(lr=lr), lr


def split_indices(n: int) -> tuple[list[int], list[int]]:
    """80/20 train/held-out split by index; train is never empty."""
    n_train = max(1, int(n * 0.8))
    return list(range(n_train)), list(range(n_train, n))


def _flip_batch(rng, xb, tb):
    xb, tb = xb.copy(), tb.copy()
    for i in range(xb.shape[0]):
        if rng.random() < 0.5:
            xb[i] = xb[i, :, :, ::-1]
            tb[i] = tb[i, :, :, ::-1]
        if rng.random() < 0.5:
            xb[i] = xb[i, :, ::-1, :]
            tb[i] = tb[i, :, ::-1, :]
    return xb, tb


def evaluate_heldout(graph, weights, images, masks, ids, threshold=0.5) -> metrics.MetricReport:
    per = []
    for i, sid in enumerate(ids):
        out = G.run_graph(graph, weights, images[i:i + 1], outputs=["prob"])["prob"]
        per.append(metrics.image_metrics(sid, out[0, 0].astype(np.float64), masks[i, 0], threshold))
    return metrics.aggregate_report(per, threshold)


def train_toy(policy: str, model_scale: str, dataset: BlobDataset, epochs: int,
              seed: int, batch_size: int = 4, lr_override: float | None = None) -> TrainResult:
    """Returns trained weights, per-epoch mean train loss, and a held-out
    metric report (computed on the training set when the dataset is too
    small to hold anything out)."""
    if policy not in POLICIES:
        raise ShapeError(f"unknown policy {policy!r}; known: {POLICIES}")
    if model_scale not in SCALES:
        raise ShapeError(f"unknown model scale {model_scale!r}; known: {SCALES}")
    if epochs < 1 or batch_size < 1:
        raise ShapeError(f"epochs and batch_size must be >= 1, got {epochs}, {batch_size}")

    graph = build_preset_model(model_scale)
    weights = G.init_weights(graph, seed=seed)
    for k in list(weights):
        if k.startswith("head.logits."):
            weights[k] = (weights[k] * HEAD_DAMP).astype(np.float32)
    opt, lr = _make_optimizer(policy, lr_override)
    rng = np.random.default_rng((seed, 0xA06))

    images, masks = dataset.images(), dataset.masks()
    train_idx, held_idx = split_indices(len(dataset))
    xs, ts = images[train_idx], masks[train_idx]

    curve: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(train_idx))
        losses = []
        for lo in range(0, len(order), batch_size):
            sel = order[lo:lo + batch_size]
            xb, tb = xs[sel], ts[sel]
            if policy == "sgd-policy":
                xb, tb = _flip_batch(rng, xb, tb)
            tape = ad.Tape()
            wv = {k: tape.param(v) for k, v in weights.items()}
            logits = G.run_graph(graph, wv, tape.var(xb), outputs=["logits"],
                                 backend=ad, check_finite=False)["logits"]
            loss = ad.loss_seg(logits, tb)
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise NumericError(f"training diverged (non-finite loss) at epoch {epoch}")
            grads = ad.backward(tape, loss)
            ad.optimizer_step(opt, weights, {k: grads[v.vid] for k, v in wv.items()})
            losses.append(lval)
        curve.append(float(np.mean(losses)))

    eval_idx, eval_on = (held_idx, "held-out") if held_idx else (train_idx, "train")
    report = evaluate_heldout(graph, weights, images[eval_idx], masks[eval_idx],
                              [f"sample{j:04d}" for j in eval_idx])
    meta = {"policy": policy, "model_scale": model_scale, "lr": lr, "batch_size": batch_size,
            "epochs": epochs, "seed": seed, "n_train": len(train_idx),
            "n_eval": len(eval_idx), "eval_on": eval_on, "input_size": dataset.size,
            "optimizer": opt.kind, "head_damp": HEAD_DAMP}
    return TrainResult(weights, curve, report, meta)
