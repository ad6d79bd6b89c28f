"""Evaluation metrics: sentence accuracy, frame-level F1 in both polarities,
the weighted final score, and equal error rate with ROC-style interpolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .forge import FAKE, GENUINE


class ScoredTrial(NamedTuple):
    score: float
    is_target: bool


@dataclass(frozen=True)
class FrameConfusion:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: str

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def degenerate(self) -> bool:
        return self.tp + self.fp + self.fn == 0


def confusion_from_frames(predicted, truth, positive_class: str) -> FrameConfusion:
    """Count frame-level TP/FP/FN/TN from per-frame label arrays."""
    pred = np.asarray(predicted)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise ValueError("prediction/truth length mismatch")
    p = pred == positive_class
    t = true == positive_class
    return FrameConfusion(
        tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)), tn=int(np.sum(~p & ~t)),
        positive_class=positive_class)


def sentence_accuracy(predictions: dict, truths: dict) -> float:
    """Fraction of utterances whose predicted label matches the truth."""
    if set(predictions) != set(truths):
        missing = set(truths) ^ set(predictions)
        raise DataError(f"utterance id mismatch: {sorted(missing)[0]!r}")
    if not truths:
        raise ValueError("no utterances to score")
    return sum(predictions[u] == truths[u] for u in truths) / len(truths)


def f1(conf: FrameConfusion) -> float:
    """2*TP / (2*TP + FN + FP); the all-true-negative case is defined as 0."""
    denom = 2 * conf.tp + conf.fn + conf.fp
    if denom == 0:
        return 0.0
    return 2 * conf.tp / denom


def add_score(a: float, f1_star: float, weights=(0.3, 0.7)) -> float:
    """Weighted sum of sentence accuracy and fake-positive F1."""
    if not (0.0 <= a <= 1.0 and 0.0 <= f1_star <= 1.0):
        raise ValueError("metric inputs must lie in [0, 1]")
    return weights[0] * a + weights[1] * f1_star


def _operating_points(trials):
    tar = np.sort(np.array([t.score for t in trials if t.is_target]))
    non = np.sort(np.array([t.score for t in trials if not t.is_target]))
    if tar.size == 0 or non.size == 0:
        raise ValueError("need at least one target and one non-target trial")
    thresholds = np.unique(np.concatenate([tar, non]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)  # all-reject point
    far = np.array([(non >= t).sum() / non.size for t in thresholds])
    frr = np.array([(tar < t).sum() / tar.size for t in thresholds])
    return far, frr


def eer(trials) -> float:
    """Equal error rate: FAR at the FAR/FRR crossing, linearly interpolated
    between adjacent operating points."""
    far, frr = _operating_points(trials)
    diff = frr - far
    i = int(np.argmax(diff >= 0.0))
    if diff[i] == 0.0:
        return float(far[i])
    if i == 0:
        return float(far[0])
    a = -diff[i - 1] / (diff[i] - diff[i - 1])
    return float(far[i - 1] + a * (far[i] - far[i - 1]))
