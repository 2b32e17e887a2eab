"""Evaluation metrics: ROC AUC (binary and macro one-vs-rest) and RMSE
on z-scored regression targets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError, UndefinedMetric


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """P(random positive outranks random negative), ties credited 1/2.

    Mann-Whitney rank-sum form, O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must have equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("binary AUC needs both classes present")
    ranks = _midranks(scores)
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_ovr_auc(probs: np.ndarray, labels: Sequence[int],
                  return_skipped: bool = False):
    """Unweighted mean of one-vs-rest AUCs over the probability columns.

    Classes absent from ``labels`` are skipped (and reported when
    ``return_skipped`` is set).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise ShapeError("probs must be (n, k) aligned with labels")
    present = set(int(v) for v in np.unique(labels))
    if len(present) < 2:
        raise UndefinedMetric("macro AUC needs >= 2 classes present")
    aucs = []
    skipped = []
    for k in range(probs.shape[1]):
        if k not in present:
            skipped.append(k)
            continue
        binary = (labels == k).astype(int)
        aucs.append(binary_auc(probs[:, k], binary))
    if not aucs:
        raise UndefinedMetric("no class had both members and non-members")
    result = float(np.mean(aucs))
    return (result, skipped) if return_skipped else result


@dataclass
class TargetStats:
    """Normalization statistics, computed on the training split only."""
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    @classmethod
    def from_targets(cls, targets: Sequence[float]) -> "TargetStats":
        arr = np.asarray(targets, dtype=np.float64)
        return cls(mean=float(arr.mean()), std=float(arr.std()))


def rmse(preds: Sequence[float], targets: Sequence[float], stats: TargetStats,
         report_units: str = "normalized") -> float:
    """RMSE after z-scoring both sides with train-split stats.

    ``report_units="original"`` multiplies back by stats.std.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ShapeError("preds and targets must be equal-length and nonempty")
    zp = (preds - stats.mean) / stats.std
    zt = (targets - stats.mean) / stats.std
    value = float(np.sqrt(np.mean((zp - zt) ** 2)))
    if report_units == "original":
        return value * stats.std
    if report_units != "normalized":
        raise ValueError(f"unknown report_units {report_units!r}")
    return value
