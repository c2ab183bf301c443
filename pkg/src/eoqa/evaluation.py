"""Retrieval-style evaluation of interval predictions plus the scalar Score.

Predictions are compared to targets as grid class indices.  medR is the
median absolute interval distance, R@K the percentage of pairs closer than
K intervals (R@1 is exact match).  P/R/A/F@K binarize the thresholded label
set inside the +-K window around each target.  The Score maps a vector of
measured quality parameters onto [0, 1] with one convention entry per
parameter: score = (range - |objective - value|) / range, clamped, then
weighted-summed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ParameterError

# pairs: (target class, predicted class, probability vector or None)
EvalPair = tuple[int, int, "np.ndarray | None"]


def _dists(pairs: list[EvalPair]) -> np.ndarray:
    if not pairs:
        raise ParameterError("empty evaluation set")
    return np.array([abs(int(t) - int(p)) for t, p, *_ in pairs], dtype=np.float64)


def med_r(pairs: list[EvalPair]) -> float:
    """Median absolute interval distance between target and predicted class."""
    return float(np.median(_dists(pairs)))


def recall_at_k(pairs: list[EvalPair], k: int) -> float:
    """100 x fraction of pairs with |target - prediction| < k."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    return float(100.0 * np.mean(_dists(pairs) < k))


def prf_at_k(pairs: list[EvalPair], k: int, threshold: float = 0.3) -> dict[str, float]:
    """Precision/recall/accuracy/F1 of label sets inside the +-k target window.

    Each class within distance k of the target is one binary decision:
    predicted positive when its probability clears the threshold (pairs
    without probabilities fall back to the argmax label), actually positive
    only for the target itself.  Counts are pooled over all pairs.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not pairs:
        raise ParameterError("empty evaluation set")
    tp = fp = fn = tn = 0
    for t, p, *rest in pairs:
        probs = rest[0] if rest else None
        if probs is None:
            labels = {int(p)}
            n_classes = max(int(t), int(p)) + 1
        else:
            probs = np.asarray(probs)
            labels = set(np.flatnonzero(probs >= threshold).tolist())
            n_classes = probs.size
        lo, hi = max(0, int(t) - k + 1), min(n_classes - 1, int(t) + k - 1)
        for c in range(lo, hi + 1):
            pos = c in labels
            if c == int(t):
                tp += pos
                fn += not pos
            else:
                fp += pos
                tn += not pos
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "accuracy": accuracy, "f1": f1}


def macro_auc(pairs: list[EvalPair]) -> float:
    """One-vs-rest ROC AUC per target class, macro-averaged.

    Ties get average rank.  Classes with no negatives (or no probability
    vectors at all) are skipped; with nothing left the AUC is undefined and
    raises ParameterError.
    """
    if not pairs:
        raise ParameterError("empty evaluation set")
    probs = [rest[0] for _, _, *rest in pairs if rest and rest[0] is not None]
    if len(probs) != len(pairs):
        raise ParameterError("macro AUC needs probability vectors for every pair")
    scores = np.asarray(probs, dtype=np.float64)
    targets = np.array([int(t) for t, _, *_ in pairs])
    aucs = []
    for c in np.unique(targets):
        mask = targets == c
        n_pos = int(mask.sum())
        n_neg = len(targets) - n_pos
        if n_neg == 0:
            continue
        ranks = rankdata(scores[:, c])
        auc = (ranks[mask].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        aucs.append(auc)
    if not aucs:
        raise ParameterError("macro AUC undefined: every class lacks negatives")
    return float(np.mean(aucs))


PARAM_NAMES = ("blur", "snr", "rer", "sharpness", "gsd")


@dataclass(frozen=True)
class QualityVector:
    """Predicted modifier parameters for one image."""

    blur: float
    snr: float
    rer: float
    sharpness: float
    gsd: float

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in PARAM_NAMES}


@dataclass(frozen=True)
class MetricConvention:
    range: float
    objective: float
    weight: float


def _default_entries() -> dict[str, MetricConvention]:
    return {
        "blur": MetricConvention(2.5, 0.0, 0.2),
        "snr": MetricConvention(15.0, 30.0, 0.2),
        "rer": MetricConvention(0.40, 0.55, 0.2),
        "sharpness": MetricConvention(9.0, 1.0, 0.2),
        "gsd": MetricConvention(0.30, 0.30, 0.2),
    }


@dataclass(frozen=True)
class ScoreConvention:
    entries: dict[str, MetricConvention] = field(default_factory=_default_entries)

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {n: {"range": c.range, "objective": c.objective, "weight": c.weight}
                for n, c in sorted(self.entries.items())}


def metric_score(conv: MetricConvention, value: float) -> float:
    """(range - |objective - value|) / range, clamped into [0, 1]."""
    if conv.range <= 0:
        raise ParameterError(f"convention range must be > 0, got {conv.range}")
    s = (conv.range - abs(conv.objective - value)) / conv.range
    return float(min(1.0, max(0.0, s)))


def aggregate_score(vector: "QualityVector | dict[str, float]",
                    convention: ScoreConvention | None = None) -> float:
    """Weighted sum of per-parameter scores (equal 1/5 weights by default)."""
    convention = convention or ScoreConvention()
    values = vector.as_dict() if isinstance(vector, QualityVector) else dict(vector)
    missing = set(convention.entries) - set(values)
    if missing:
        raise ParameterError(f"vector is missing {sorted(missing)}")
    total = 0.0
    for name, value in values.items():
        conv = convention.entries.get(name)
        if conv is None:
            raise ParameterError(f"no score convention entry for {name!r}")
        total += conv.weight * metric_score(conv, value)
    return float(total)
