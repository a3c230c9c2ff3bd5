"""Segmentation quality metrics and the per-class evaluation report.

Per-class scores are one-vs-rest on label maps. AUC follows the exact
Mann-Whitney formulation (average ranks over ties), which equals the
trapezoidal area under the ROC curve; it needs pre-threshold probabilities
and is reported as absent (None) when the ground truth has a single class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


def _as_binary(name: str, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.dtype != bool:
        if not np.all((m == 0) | (m == 1)):
            raise ValueError(f"{name} must be binary")
        m = m.astype(bool)
    return m


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P&G| / (|P|+|G|); 1.0 when both masks are empty."""
    pred = _as_binary("pred", pred)
    gt = _as_binary("gt", gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((pred & gt).sum()) / total


def accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(pred == gt))


def auc(scores: np.ndarray, gt: np.ndarray) -> float | None:
    """Probability that a random positive outscores a random negative,
    ties counting half. None when gt lacks one of the classes."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    g = _as_binary("gt", gt).ravel()
    if s.shape != g.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {g.shape}")
    n_pos = int(g.sum())
    n_neg = g.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    return float((ranks[g].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class ClassScores:
    dice: float
    accuracy: float
    auc: float | None

    def as_dict(self) -> dict:
        return {"dice": self.dice, "accuracy": self.accuracy, "auc": self.auc}


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[int, ClassScores]
    overall: ClassScores
    overall_micro: ClassScores
    class_names: dict[int, str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_class": {
                    self.class_names[c]: s.as_dict() for c, s in self.per_class.items()
                },
                "overall": self.overall.as_dict(),
                "overall_micro": self.overall_micro.as_dict(),
            },
            indent=2,
            sort_keys=True,
        )

    def to_csv(self) -> str:
        """Header and value line: DICE / Acc. / AUC per class, then overall."""
        cols, vals = [], []
        for c, scores in self.per_class.items():
            name = self.class_names[c]
            for metric, v in (("DICE", scores.dice), ("Acc.", scores.accuracy),
                              ("AUC", scores.auc)):
                cols.append(f"{name} {metric}")
                vals.append("" if v is None else f"{v:.4f}")
        for metric, v in (("DICE", self.overall.dice), ("Acc.", self.overall.accuracy),
                          ("AUC", self.overall.auc)):
            cols.append(f"Overall {metric}")
            vals.append("" if v is None else f"{v:.4f}")
        return ",".join(cols) + "\n" + ",".join(vals) + "\n"


def _mean_or_none(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def metrics_report(
    pred: np.ndarray,
    gt: np.ndarray,
    probs: dict[int, np.ndarray] | None = None,
    class_names: dict[int, str] | None = None,
) -> MetricsReport:
    """One-vs-rest evaluation of a predicted label map against ground truth.

    Classes present in either map are scored; class 0 is background and never
    a row of its own. Overall is the unweighted class mean; overall_micro
    pools per-class binary decisions across classes before scoring.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    classes = sorted(int(c) for c in (set(np.unique(gt)) | set(np.unique(pred))) - {0})
    names = {c: (class_names or {}).get(c, f"class {c}") for c in classes}

    per_class: dict[int, ClassScores] = {}
    overlap_sum = size_sum = match_sum = 0
    pooled_scores, pooled_gt = [], []
    for c in classes:
        pm = pred == c
        gm = gt == c
        scores = None if probs is None else probs.get(c)
        c_auc = auc(scores, gm) if scores is not None else None
        per_class[c] = ClassScores(dice_score(pm, gm), accuracy(pm, gm), c_auc)
        overlap_sum += int((pm & gm).sum())
        size_sum += int(pm.sum()) + int(gm.sum())
        match_sum += int((pm == gm).sum())
        if scores is not None:
            pooled_scores.append(np.asarray(scores, dtype=np.float64).ravel())
            pooled_gt.append(gm.ravel())

    if classes:
        overall = ClassScores(
            float(np.mean([s.dice for s in per_class.values()])),
            float(np.mean([s.accuracy for s in per_class.values()])),
            _mean_or_none([s.auc for s in per_class.values()]),
        )
    else:  # nothing annotated and nothing predicted: vacuously perfect
        overall = ClassScores(1.0, 1.0, None)
    micro_auc = (
        auc(np.concatenate(pooled_scores), np.concatenate(pooled_gt))
        if pooled_scores
        else None
    )
    overall_micro = ClassScores(
        1.0 if size_sum == 0 else 2.0 * overlap_sum / size_sum,
        1.0 if not classes else match_sum / (len(classes) * pred.size),
        micro_auc,
    )
    return MetricsReport(per_class, overall, overall_micro, names)
