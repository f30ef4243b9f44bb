"""Dataset-level segmentation scores from an accumulated confusion matrix.

Rows are ground truth, columns predictions.  A class that never occurs in
truth or prediction has an undefined IoU and is left out of the mean; class
accuracy is averaged only over classes present in the ground truth.
"""

from __future__ import annotations

import json

import numpy as np


class MetricsError(ValueError):
    pass


class ConfusionMatrix:

    def __init__(self, n_classes, class_names=None):
        if n_classes < 1:
            raise MetricsError("need at least one class")
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        if class_names is not None and len(class_names) != n_classes:
            raise MetricsError("class_names length does not match n_classes")
        self.class_names = list(class_names) if class_names is not None else None

    @property
    def n_classes(self):
        return self.counts.shape[0]

    def accumulate(self, truth, pred):
        truth = np.asarray(truth, dtype=np.int64).ravel()
        pred = np.asarray(pred, dtype=np.int64).ravel()
        if truth.shape != pred.shape:
            raise MetricsError(f"label arrays differ in length: {truth.size} vs {pred.size}")
        c = self.n_classes
        for name, arr in (("truth", truth), ("pred", pred)):
            if arr.size and (arr.min() < 0 or arr.max() >= c):
                raise MetricsError(f"{name} label out of range [0, {c})")
        self.counts += np.bincount(truth * c + pred, minlength=c * c).reshape(c, c)
        return self

    def __add__(self, other):
        if other.n_classes != self.n_classes:
            raise MetricsError("cannot merge matrices with different class counts")
        out = ConfusionMatrix(self.n_classes, self.class_names)
        out.counts = self.counts + other.counts
        return out

    def _tp_fp_fn(self):
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        return tp, fp, fn

    def iou_per_class(self):
        """IoU per class; ``nan`` where the class never occurs."""
        tp, fp, fn = self._tp_fp_fn()
        union = tp + fp + fn
        out = np.full(self.n_classes, np.nan)
        np.divide(tp, union, out=out, where=union > 0)
        return out

    def accuracy_per_class(self):
        """Recall per class; ``nan`` where the class is absent from truth."""
        tp, _, fn = self._tp_fp_fn()
        support = tp + fn
        out = np.full(self.n_classes, np.nan)
        np.divide(tp, support, out=out, where=support > 0)
        return out

    def mean_iou(self):
        iou = self.iou_per_class()
        if np.all(np.isnan(iou)):
            raise MetricsError("no class occurs in truth or prediction")
        return float(np.nanmean(iou))

    def mean_class_accuracy(self):
        acc = self.accuracy_per_class()
        if np.all(np.isnan(acc)):
            raise MetricsError("no class occurs in the ground truth")
        return float(np.nanmean(acc))

    def report(self):
        iou = self.iou_per_class()
        acc = self.accuracy_per_class()
        names = self.class_names or [str(c) for c in range(self.n_classes)]

        def _num(v):
            return None if np.isnan(v) else float(v)

        return {
            "classes": [{"class": n, "iou": _num(i), "accuracy": _num(a)}
                        for n, i, a in zip(names, iou, acc)],
            "mIoU": self.mean_iou(),
            "mA": self.mean_class_accuracy(),
        }

    def to_json(self):
        return json.dumps(self.report(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        rep = self.report()
        width = max(5, *(len(c["class"]) for c in rep["classes"]))
        lines = [f"{'class':<{width}}  {'IoU':>8}  {'acc':>8}"]
        for c in rep["classes"]:
            iou = "-" if c["iou"] is None else f"{c['iou']:.4f}"
            acc = "-" if c["accuracy"] is None else f"{c['accuracy']:.4f}"
            lines.append(f"{c['class']:<{width}}  {iou:>8}  {acc:>8}")
        lines.append(f"{'mIoU':<{width}}  {rep['mIoU']:>8.4f}")
        lines.append(f"{'mA':<{width}}  {rep['mA']:>8.4f}")
        return "\n".join(lines) + "\n"


def confusion_matrix(truth, pred, n_classes):
    return ConfusionMatrix(n_classes).accumulate(truth, pred)
