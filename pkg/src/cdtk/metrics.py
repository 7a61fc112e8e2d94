"""Pixel confusion counts and binary change-map scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def merge(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.fn + other.fn, self.tn + other.tn)


def accumulate(conf: Confusion, pred: np.ndarray, label: np.ndarray) -> Confusion:
    """Add per-pixel counts; class 1 (change) is positive."""
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.shape != label.shape:
        raise ValueError(f"accumulate: shapes differ {pred.shape} vs {label.shape}")
    p = pred.astype(bool)
    y = label.astype(bool)
    conf.tp += int(np.count_nonzero(p & y))
    conf.fp += int(np.count_nonzero(p & ~y))
    conf.fn += int(np.count_nonzero(~p & y))
    conf.tn += int(np.count_nonzero(~p & ~y))
    return conf


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0  # 0/0 -> 0 by convention


def scores(conf: Confusion) -> dict:
    precision = _ratio(conf.tp, conf.tp + conf.fp)
    recall = _ratio(conf.tp, conf.tp + conf.fn)
    f1 = _ratio(2 * conf.tp, 2 * conf.tp + conf.fp + conf.fn)
    iou = _ratio(conf.tp, conf.tp + conf.fp + conf.fn)
    return {"precision": precision, "recall": recall, "f1": f1, "iou": iou}
