"""Scalar metrics and curves for confidence evaluation.

AUROC here is the exact Mann-Whitney statistic (all-pairs win rate, ties count
half) computed by rank-sum in O(n log n); no ROC binning is involved, so the
value is exact up to float rounding. Risk-coverage machinery accepts a sample
when its confidence is >= the threshold.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def auroc(pos_scores, neg_scores) -> float:
    """P(random positive score > random negative score), ties counted 0.5.

    Equals the normalized Mann-Whitney U: with R = sum of the (tie-averaged)
    ranks of the positives in the pooled sample,
    U = R - n_pos(n_pos+1)/2 and AUROC = U / (n_pos * n_neg).
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUROC undefined: one side is empty")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def delta_conf(pos_scores, neg_scores) -> float:
    """Mean(pos) - mean(neg), in percentage points; may be negative."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("delta_conf undefined: one side is empty")
    return float(100.0 * (pos.mean() - neg.mean()))


def _split_by_correctness(log):
    conf = np.asarray(log.confidence, dtype=np.float64)
    correct = np.asarray(log.correct, dtype=np.int64)
    return conf[correct == 1], conf[correct == 0]


def auroc_risk(log) -> float:
    """1 - AUROC(correct confidences, wrong confidences); lower is better."""
    pos, neg = _split_by_correctness(log)
    return 1.0 - auroc(pos, neg)


def sweep_thresholds(confidences: np.ndarray) -> np.ndarray:
    """Sorted distinct confidence values plus the 0 and 1 endpoints."""
    return np.unique(np.concatenate([confidences, [0.0, 1.0]]))


def risk_coverage(log) -> list[tuple[float, float, float]]:
    """(threshold, coverage, risk) at every swept threshold.

    At threshold t the accepted set is {confidence >= t}; coverage is its
    fraction of the log and risk its error rate. Thresholds whose accepted set
    is empty are omitted. Coverage is non-increasing in the threshold.
    """
    conf = np.asarray(log.confidence, dtype=np.float64)
    correct = np.asarray(log.correct, dtype=np.int64)
    if conf.size == 0:
        raise ValueError("empty log")
    points = []
    for t in sweep_thresholds(conf):
        accepted = conf >= t
        n = int(accepted.sum())
        if n == 0:
            continue
        risk = 1.0 - correct[accepted].mean()
        points.append((float(t), n / conf.size, float(risk)))
    return points


def coverage_at_risk(log, target_accuracy: float) -> float | None:
    """Maximum coverage whose accepted-set accuracy is >= the target, or None
    when no swept threshold qualifies."""
    if not 0.0 < target_accuracy <= 1.0:
        raise ValueError("target_accuracy must be in (0, 1]")
    best = None
    for _, coverage, risk in risk_coverage(log):
        if 1.0 - risk >= target_accuracy and (best is None or coverage > best):
            best = coverage
    return best


def accuracy_coverage_curve(log) -> list[tuple[float, float, float]]:
    """(threshold, coverage, accuracy) over the swept thresholds; the accepted
    set is {confidence >= t} as everywhere else."""
    return [(t, cov, 1.0 - risk) for t, cov, risk in risk_coverage(log)]


def detection_f1(id_scores, adv_scores, threshold: float) -> float:
    """Macro-F1 of flagging scores below the threshold as adversarial.

    Per-class F1 is defined as 0 when precision + recall is 0.
    """
    id_scores = np.asarray(id_scores, dtype=np.float64)
    adv_scores = np.asarray(adv_scores, dtype=np.float64)
    if id_scores.size == 0 or adv_scores.size == 0:
        raise ValueError("detection_f1 undefined: one side is empty")

    # Positive class "adversarial": predicted when score < threshold.
    tp_adv = int((adv_scores < threshold).sum())
    fp_adv = int((id_scores < threshold).sum())
    fn_adv = int((adv_scores >= threshold).sum())
    # Positive class "in-distribution": predicted when score >= threshold.
    tp_id = int((id_scores >= threshold).sum())
    fp_id = fn_adv
    fn_id = fp_adv

    def f1(tp: int, fp: int, fn: int) -> float:
        denom = 2 * tp + fp + fn
        return 2 * tp / denom if denom else 0.0

    return (f1(tp_adv, fp_adv, fn_adv) + f1(tp_id, fp_id, fn_id)) / 2.0


DEFAULT_THRESHOLD_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


def cascade_curve(small_log, large_correct, thresholds=None
                  ) -> tuple[list[tuple[float, float]], float]:
    """Accuracy of a two-model cascade as the routing threshold varies.

    A sample is answered by the small model when its small-model confidence is
    >= t, and routed to the large model otherwise. Returns the (threshold,
    accuracy) points and the area score: the normalized trapezoid of accuracy
    over the threshold grid (the default grid is [0, 1] in steps of 0.01).
    """
    small_conf = np.asarray(small_log.confidence, dtype=np.float64)
    small_correct = np.asarray(small_log.correct, dtype=np.int64)
    large_correct = np.asarray(large_correct, dtype=np.int64)
    if small_conf.shape != large_correct.shape:
        raise ValueError("small log and large predictions are misaligned")
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLD_GRID
    thresholds = np.asarray(thresholds, dtype=np.float64)

    points = []
    for t in thresholds:
        routed = small_conf < t
        correct = np.where(routed, large_correct, small_correct)
        points.append((float(t), float(correct.mean())))
    accs = np.array([a for _, a in points])
    if thresholds.size > 1:
        area = float(np.trapezoid(accs, thresholds) / (thresholds[-1] - thresholds[0]))
    else:
        area = float(accs[0])
    return points, area
