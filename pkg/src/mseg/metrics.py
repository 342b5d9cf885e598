"""Segmentation quality metrics, per-image and dataset-aggregated.

Six count-based ratios (dice, iou, precision, recall, f2, accuracy) plus
mean absolute error on the raw probabilities.  Dataset aggregation is the
arithmetic mean of per-image values, not a pooled-count ratio; reports
carry the per-image records so either view is recomputable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from . import ops

METRIC_KEYS = ("dice", "iou", "precision", "recall", "f2", "accuracy")
AGGREGATE_KEYS = ("mdice", "miou", "precision", "recall", "f2", "accuracy", "mae")


def binarize(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1.0 where prob >= threshold else 0.0 (boundary counts as positive)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be within [0,1], got {threshold}")
    p = np.asarray(prob)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError(f"probabilities must lie in [0,1], got range [{p.min()}, {p.max()}]")
    return (p >= threshold).astype(np.float32)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"counts must be nonnegative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _check_binary(a: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(a)
    if not np.isin(x, (0, 1)).all():
        raise ValueError(f"{what} must contain only 0/1 values")
    return x.astype(np.int64)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    p, g = np.asarray(pred), np.asarray(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ in shape")
    p, g = _check_binary(p, "prediction"), _check_binary(g, "ground truth")
    tp = int((p & g).sum())
    fp = int((p & (1 - g)).sum())
    fn = int(((1 - p) & g).sum())
    tn = int(((1 - p) & (1 - g)).sum())
    return ConfusionCounts(tp, fp, fn, tn)


def scalar_metrics(c: ConfusionCounts) -> dict[str, float]:
    """The six count ratios with the zero-denominator convention.

    Any ratio whose denominator is 0 returns 1.0 when tp=fp=fn=0 (both
    masks empty, vacuously perfect) and 0.0 otherwise, so degenerate
    images do not poison dataset means.
    """
    vacuous = c.tp == 0 and c.fp == 0 and c.fn == 0

    def ratio(num: float, den: float) -> float:
        if den > 0:
            return num / den
        return 1.0 if vacuous else 0.0

    return {
        "dice": ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "iou": ratio(c.tp, c.tp + c.fp + c.fn),
        "precision": ratio(c.tp, c.tp + c.fp),
        "recall": ratio(c.tp, c.tp + c.fn),
        "f2": ratio(5 * c.tp, 5 * c.tp + 4 * c.fn + c.fp),
        "accuracy": ratio(c.tp + c.tn, c.total),
    }


def mae(prob: np.ndarray, gt: np.ndarray) -> float:
    p, g = np.asarray(prob, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"prob {p.shape} and ground truth {g.shape} differ in shape")
    return float(np.abs(p - g).mean())


@dataclass(frozen=True)
class ImageMetrics:
    id: str
    dice: float
    iou: float
    precision: float
    recall: float
    f2: float
    accuracy: float
    mae: float

    def to_dict(self) -> dict:
        return {"id": self.id, **{k: getattr(self, k) for k in METRIC_KEYS}, "mae": self.mae}


@dataclass(frozen=True)
class MetricReport:
    threshold: float
    per_image: tuple[ImageMetrics, ...]
    mdice: float
    miou: float
    precision: float
    recall: float
    f2: float
    accuracy: float
    mae: float

    @property
    def n_images(self) -> int:
        return len(self.per_image)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "n_images": self.n_images,
                **{k: getattr(self, k) for k in AGGREGATE_KEYS},
                "per_image": [m.to_dict() for m in self.per_image]}


def image_metrics(image_id: str, prob: np.ndarray, gt: np.ndarray,
                  threshold: float = 0.5) -> ImageMetrics:
    """Metrics for one prediction; resizes prob to the gt resolution first."""
    p, g = np.asarray(prob, dtype=np.float64), np.asarray(gt)
    if p.ndim != 2 or g.ndim != 2:
        raise ShapeError(f"expected 2-d maps, got prob {p.shape}, gt {g.shape}")
    if p.shape != g.shape:
        p = ops.upsample_bilinear(p[None, None], g.shape[0], g.shape[1])[0, 0]
        p = np.clip(p, 0.0, 1.0)
    scores = scalar_metrics(confusion(binarize(p, threshold), g))
    return ImageMetrics(image_id, mae=mae(p, g), **scores)


def aggregate_report(per_image, threshold: float) -> MetricReport:
    recs = tuple(per_image)
    if not recs:
        raise ValueError("cannot aggregate an empty set of image metrics")

    def mean(attr):
        return math.fsum(getattr(m, attr) for m in recs) / len(recs)

    return MetricReport(threshold, recs, mdice=mean("dice"), miou=mean("iou"),
                        precision=mean("precision"), recall=mean("recall"),
                        f2=mean("f2"), accuracy=mean("accuracy"), mae=mean("mae"))


def evaluate_dataset(pred_source, gt_source, threshold: float = 0.5) -> MetricReport:
    """pred_source/gt_source: mappings id -> 2-d array (prob in [0,1], gt
    binary).  Ids must match exactly; order of evaluation is sorted id."""
    pred_ids, gt_ids = set(pred_source), set(gt_source)
    if pred_ids != gt_ids:
        missing_pred = sorted(gt_ids - pred_ids)
        missing_gt = sorted(pred_ids - gt_ids)
        raise ValueError(f"id mismatch: missing predictions {missing_pred}, "
                         f"missing ground truth {missing_gt}")
    per = [image_metrics(i, pred_source[i], gt_source[i], threshold) for i in sorted(pred_ids)]
    return aggregate_report(per, threshold)


def format_table(report: MetricReport, per_image: bool = False) -> str:
    cols = ["id"] + list(METRIC_KEYS) + ["mae"]
    rows = []
    if per_image:
        rows += [[m.id] + [f"{getattr(m, k):.4f}" for k in cols[1:]] for m in report.per_image]
    agg = {"dice": report.mdice, "iou": report.miou, **{k: getattr(report, k) for k in
           ("precision", "recall", "f2", "accuracy", "mae")}}
    rows.append([f"mean({report.n_images})"] + [f"{agg[k]:.4f}" for k in cols[1:]])
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    fmt = "  ".join(f"{{:<{w}}}" if i == 0 else f"{{:>{w}}}" for i, w in enumerate(widths))
    return "\n".join([fmt.format(*cols)] + [fmt.format(*r) for r in rows])
