"""Pixel confusion counts, BER / F1, and the full / cast / attached protocol.

Protocol per image:

* full: predicted shadow union vs. ground-truth union (undefined counts as
  shadow), over every pixel;
* cast: predicted cast vs. ground-truth cast, undefined pixels excluded;
* attached: predicted attached vs. ground-truth attached, object pixels only.

Degenerate denominators: an empty positive (or negative) class scores a
perfect rate for that class; precision with no predicted positives is 0 and
F1 is then 0, except when ground truth has no positives either, which counts
as perfect agreement (precision = F1 = 1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .raster import DataError, TriClassMask, check_mask, check_same_shape

CATEGORIES = ("full", "cast", "attached")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )


@dataclass(frozen=True)
class CategoryMetrics:
    precision: float
    recall: float
    f1: float
    ber: float
    counts: ConfusionCounts

    @classmethod
    def from_counts(cls, counts: ConfusionCounts) -> "CategoryMetrics":
        return cls(precision(counts), recall(counts), f1(counts), ber(counts), counts)


@dataclass(frozen=True)
class MetricsReport:
    full: CategoryMetrics
    cast: CategoryMetrics
    attached: CategoryMetrics | None  # None when the object mask is empty

    def as_dict(self) -> dict:
        return {name: (asdict(m) if m is not None else None) for name, m in self.items()}

    def items(self):
        return ((name, getattr(self, name)) for name in CATEGORIES)


def confusion(pred, gt, eval_mask=None) -> ConfusionCounts:
    pred = check_mask(pred, "prediction")
    gt = check_mask(gt, "ground truth")
    if eval_mask is None:
        eval_mask = np.ones(pred.shape, dtype=bool)
    eval_mask = check_mask(eval_mask, "evaluation mask")
    check_same_shape(pred, gt, eval_mask)
    if not eval_mask.any():
        raise DataError("evaluation mask is empty")
    p = pred[eval_mask]
    g = gt[eval_mask]
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, tn=p.size - tp - fp - fn, fp=fp, fn=fn)


def _rate(num, den, empty):
    return empty if den == 0 else num / den


def recall(c: ConfusionCounts) -> float:
    return _rate(c.tp, c.tp + c.fn, 1.0)


def specificity(c: ConfusionCounts) -> float:
    return _rate(c.tn, c.tn + c.fp, 1.0)


def _nothing_to_find(c: ConfusionCounts) -> bool:
    return c.tp + c.fp + c.fn == 0


def precision(c: ConfusionCounts) -> float:
    return 1.0 if _nothing_to_find(c) else _rate(c.tp, c.tp + c.fp, 0.0)


def f1(c: ConfusionCounts) -> float:
    if _nothing_to_find(c):
        return 1.0
    p, r = precision(c), recall(c)
    if c.tp + c.fp == 0 or p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def ber(c: ConfusionCounts) -> float:
    """Balanced error rate in percent."""
    return 100.0 * (1.0 - 0.5 * (recall(c) + specificity(c)))


def bundle_counts(pred: TriClassMask, gt: TriClassMask, object_mask) -> dict:
    """Confusion counts per category; attached is None for an empty object mask."""
    object_mask = check_mask(object_mask, "object mask")
    check_same_shape(pred.labels, gt.labels, object_mask)
    counts = {
        "full": confusion(pred.union, gt.union),
        "cast": None,
        "attached": None,
    }
    defined = ~gt.undefined
    if defined.any():
        counts["cast"] = confusion(pred.cast, gt.cast, defined)
    if object_mask.any():
        counts["attached"] = confusion(pred.attached, gt.attached, object_mask)
    return counts


def evaluate_bundle(pred: TriClassMask, gt: TriClassMask, object_mask) -> MetricsReport:
    counts = bundle_counts(pred, gt, object_mask)
    return MetricsReport(
        **{k: (CategoryMetrics.from_counts(c) if c is not None else None) for k, c in counts.items()}
    )


@dataclass(frozen=True)
class SuiteReport:
    """Per-category means over a set of images.

    ``aggregate='image'`` averages per-image metrics with equal weight;
    ``'pixel'`` pools the counts first. Images where a category is absent are
    skipped for that category.
    """

    aggregate: str
    images: int
    metrics: dict  # category -> {"precision", "recall", "f1", "ber", "images"}

    def as_dict(self) -> dict:
        return {"aggregate": self.aggregate, "images": self.images, "metrics": self.metrics}


def aggregate_counts(per_image: list[dict], aggregate: str = "image") -> SuiteReport:
    if aggregate not in ("image", "pixel"):
        raise ValueError(f"aggregate must be 'image' or 'pixel', got {aggregate!r}")
    metrics = {}
    for cat in CATEGORIES:
        present = [c[cat] for c in per_image if c[cat] is not None]
        if not present:
            metrics[cat] = None
            continue
        if aggregate == "pixel":
            pooled = present[0]
            for c in present[1:]:
                pooled = pooled + c
            m = CategoryMetrics.from_counts(pooled)
            values = {"precision": m.precision, "recall": m.recall, "f1": m.f1, "ber": m.ber}
        else:
            ms = [CategoryMetrics.from_counts(c) for c in present]
            values = {
                key: float(np.mean([getattr(m, key) for m in ms]))
                for key in ("precision", "recall", "f1", "ber")
            }
        values["images"] = len(present)
        metrics[cat] = values
    return SuiteReport(aggregate, len(per_image), metrics)


def format_table(report: SuiteReport) -> str:
    """Aligned BER / F1 table for full, cast and attached shadows."""
    header = f"{'':<10}" + "".join(f"{cat.capitalize():>18}" for cat in CATEGORIES)
    sub = f"{'':<10}" + "".join(f"{'BER(v)':>9}{'F1(^)':>9}" for _ in CATEGORIES)
    cells = []
    for cat in CATEGORIES:
        m = report.metrics[cat]
        if m is None:
            cells.append(f"{'-':>9}{'-':>9}")
        else:
            cells.append(f"{m['ber']:>9.2f}{100.0 * m['f1']:>9.2f}")
    row = f"{'ours':<10}" + "".join(cells)
    note = (
        f"aggregate={report.aggregate} images={report.images}; "
        "empty class => rate 1; no predicted positives => precision 0, F1 0 (1 if none expected)"
    )
    return "\n".join([header, sub, row, note])
