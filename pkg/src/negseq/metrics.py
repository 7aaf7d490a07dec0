"""Classification metrics: confusion counts, P/R/F1, AUC, AUPRC, AAI.

Per-class scores are one-vs-rest. Undefined ratios (0/0) are reported
as 0 with a warning rather than dropped, so aggregate values stay
well-defined on degenerate inputs. Ranking metrics skip classes that
lack the needed side (no positives, or for AUC no negatives) and report
which classes were skipped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass
class ConfusionMatrix:
    """Counts with true classes on rows and predicted classes on columns."""

    classes: list[str]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if self.counts.shape != (n, n):
            raise DataError(f"confusion counts must be {n}x{n}")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(
    true: Sequence[str],
    predicted: Sequence[str],
    classes: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Tally a confusion matrix; class order defaults to sorted union."""
    if len(true) != len(predicted):
        raise DataError("true and predicted label lists differ in length")
    if classes is None:
        classes = sorted(set(true) | set(predicted))
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true, predicted):
        if t not in index or p not in index:
            missing = t if t not in index else p
            raise DataError(f"label {missing!r} missing from class list")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes, counts)


def _safe_div(num: float, den: float, what: str) -> float:
    if den == 0:
        warnings.warn(f"{what} is 0/0; reporting 0", stacklevel=3)
        return 0.0
    return num / den


def prf_accuracy(cm: ConfusionMatrix) -> dict:
    """Accuracy plus per-class and aggregated precision/recall/F1.

    Returns macro (unweighted mean) and weighted (by true-class count)
    aggregates; the weighted numbers are the headline values used in
    reports.
    """
    counts = cm.counts
    total = cm.total
    accuracy = _safe_div(float(np.trace(counts)), float(total), "accuracy")
    per_class = {}
    supports = counts.sum(axis=1)
    for i, label in enumerate(cm.classes):
        tp = float(counts[i, i])
        precision = _safe_div(tp, float(counts[:, i].sum()), f"precision[{label}]")
        recall = _safe_div(tp, float(supports[i]), f"recall[{label}]")
        f1 = _safe_div(2 * precision * recall, precision + recall, f"f1[{label}]")
        per_class[label] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": int(supports[i]),
        }
    n_classes = len(cm.classes)
    out = {"accuracy": accuracy, "per_class": per_class}
    for name in ("precision", "recall", "f1"):
        values = np.asarray([per_class[c][name] for c in cm.classes])
        out[f"{name}_macro"] = float(values.mean()) if n_classes else 0.0
        out[f"{name}_weighted"] = (
            float((values * supports).sum() / total) if total else 0.0
        )
    return out


def _midranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied scores sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_binary(y: np.ndarray, scores: np.ndarray) -> float:
    """Rank-statistic AUC; ties between classes count one half."""
    y = np.asarray(y, dtype=bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative")
    ranks = _midranks(np.asarray(scores, dtype=np.float64))
    pos_rank_sum = float(ranks[y].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(y: np.ndarray, scores: np.ndarray) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct score threshold, descending."""
    y = np.asarray(y, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    points = [(0.0, 0.0)]
    for t in sorted(set(scores.tolist()), reverse=True):
        hit = scores >= t
        tp = int((hit & y).sum())
        fp = int((hit & ~y).sum())
        points.append(
            (fp / n_neg if n_neg else 0.0, tp / n_pos if n_pos else 0.0)
        )
    return points


def pr_points(y: np.ndarray, scores: np.ndarray) -> list[tuple[float, float]]:
    """(recall, precision) pairs swept over descending thresholds.

    Anchored at (0, 1): with nothing predicted positive, precision is
    taken as 1 by convention so the curve starts at zero recall.
    """
    y = np.asarray(y, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("PR curve needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_y = y[order]
    tp_cum = np.cumsum(sorted_y)
    points = [(0.0, 1.0)]
    n = len(scores)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp = int(tp_cum[j])
        predicted = j + 1
        points.append((tp / n_pos, tp / predicted))
        i = j + 1
    return points


def auprc_binary(y: np.ndarray, scores: np.ndarray) -> float:
    """Area under the PR curve by trapezoid over the threshold sweep."""
    pts = pr_points(y, scores)
    area = 0.0
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        area += (r1 - r0) * (p1 + p0) / 2.0
    return area


def auc_ovr(
    true: Sequence[str],
    proba: np.ndarray,
    classes: Sequence[str],
) -> tuple[float | None, dict[str, float], list[str]]:
    """One-vs-rest AUC per class, macro-averaged over computable classes."""
    true = np.asarray(list(true))
    proba = np.asarray(proba, dtype=np.float64)
    per_class: dict[str, float] = {}
    skipped: list[str] = []
    for i, label in enumerate(classes):
        y = true == label
        if y.all() or not y.any():
            skipped.append(label)
            continue
        per_class[label] = auc_binary(y, proba[:, i])
    macro = float(np.mean(list(per_class.values()))) if per_class else None
    return macro, per_class, skipped


def auprc_ovr(
    true: Sequence[str],
    proba: np.ndarray,
    classes: Sequence[str],
) -> tuple[float | None, dict[str, float], list[str]]:
    """One-vs-rest AUPRC per class; classes without positives are skipped."""
    true = np.asarray(list(true))
    proba = np.asarray(proba, dtype=np.float64)
    per_class: dict[str, float] = {}
    skipped: list[str] = []
    for i, label in enumerate(classes):
        y = true == label
        if not y.any():
            skipped.append(label)
            continue
        per_class[label] = auprc_binary(y, proba[:, i])
    macro = float(np.mean(list(per_class.values()))) if per_class else None
    return macro, per_class, skipped


def aai(new: Sequence[float], base: Sequence[float]) -> float:
    """Mean percent accuracy gain of ``new`` over ``base``, paired.

    ``aai([0.6, 0.5], [0.5, 0.4])`` is 22.5: +20% and +25% averaged.
    """
    new = np.asarray(new, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    if new.shape != base.shape or new.ndim != 1 or new.size == 0:
        raise DataError("aai needs two equal-length nonempty vectors")
    if (base <= 0).any():
        raise DataError("aai base accuracies must be positive")
    return float(((new - base) / base).mean() * 100.0)


def build_report(
    classifier: str,
    classes: Sequence[str],
    y_true: Sequence[str],
    proba: np.ndarray,
    predicted: Sequence[str],
    run: dict | None = None,
    curves: bool = True,
) -> dict:
    """Assemble the full JSON-ready metrics block for one classifier."""
    classes = list(classes)
    cm = confusion(y_true, predicted, classes)
    report = {"classifier": classifier, "classes": classes}
    if run:
        report["run"] = dict(run)
    report.update(prf_accuracy(cm))
    auc_macro, auc_per, auc_skip = auc_ovr(y_true, proba, classes)
    pr_macro, pr_per, pr_skip = auprc_ovr(y_true, proba, classes)
    report["auc_ovr_macro"] = auc_macro
    report["auprc_macro"] = pr_macro
    report["skipped_classes"] = {"auc": auc_skip, "auprc": pr_skip}
    for label in classes:
        block = report["per_class"][label]
        block["auc"] = auc_per.get(label)
        block["auprc"] = pr_per.get(label)
    report["confusion"] = {"classes": classes, "counts": cm.counts.tolist()}
    if curves:
        true_arr = np.asarray(list(y_true))
        curve_block = {}
        for i, label in enumerate(classes):
            y = true_arr == label
            entry = {}
            if y.any() and not y.all():
                entry["roc"] = [list(pt) for pt in roc_points(y, proba[:, i])]
            if y.any():
                entry["pr"] = [list(pt) for pt in pr_points(y, proba[:, i])]
            curve_block[label] = entry
        report["curves"] = curve_block
    return report
