"""A uniform confidence-scoring interface over the four methods compared here:
vanilla max-probability, temperature scaling, label smoothing, and the
self-calibration head trained by the pipeline.

Temperature scaling and label smoothing differ from vanilla only in state
(a fitted T) or in how the bound model was trained; the self-calibration
method reads its confidence from the binary correctness head instead of the
main softmax.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Dataset, merge_datasets, split_folds
from .model import (
    ModelParameters,
    featurize,
    forward_calib,
    main_logits,
    predict,
    softmax,
    train_main,
)

METHODS = ("vanilla", "temperature", "label_smoothing", "toast")


@dataclass(frozen=True)
class ConfidenceLog:
    """Parallel arrays of (confidence, correctness, prediction, group tag)."""

    confidence: np.ndarray
    correct: np.ndarray
    pred: np.ndarray
    group: tuple[str, ...]

    def __post_init__(self):
        n = len(self.confidence)
        if not (len(self.correct) == len(self.pred) == len(self.group) == n):
            raise ValueError("log columns have mismatched lengths")
        if n and not np.all(np.isfinite(self.confidence)):
            raise ValueError("non-finite confidence values")

    def __len__(self) -> int:
        return len(self.confidence)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["confidence", "correct", "pred", "group"])
            for c, ok, y, g in zip(self.confidence, self.correct, self.pred, self.group):
                writer.writerow([repr(float(c)), int(ok), int(y), g])

    @classmethod
    def from_csv(cls, path) -> "ConfidenceLog":
        conf, correct, pred, group = [], [], [], []
        with open(Path(path), encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                conf.append(float(row["confidence"]))
                correct.append(int(row["correct"]))
                pred.append(int(row["pred"]))
                group.append(row["group"])
        return cls(np.array(conf), np.array(correct, dtype=np.int64),
                   np.array(pred, dtype=np.int64), tuple(group))


def concat_logs(logs) -> ConfidenceLog:
    logs = list(logs)
    return ConfidenceLog(
        confidence=np.concatenate([l.confidence for l in logs]),
        correct=np.concatenate([l.correct for l in logs]),
        pred=np.concatenate([l.pred for l in logs]),
        group=tuple(g for l in logs for g in l.group),
    )


class Calibrator:
    """A scoring method bound to model parameters (plus a fitted temperature
    for the "temperature" method)."""

    def __init__(self, method: str, params: ModelParameters,
                 temperature: float | None = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        if temperature is not None and temperature <= 0:
            raise ValueError("temperature must be positive")
        self.method = method
        self.params = params
        self.temperature = temperature

    def score(self, sample) -> tuple[int, float]:
        """(predicted label, confidence in it). The label always comes from the
        main head; only the confidence definition varies by method."""
        p = self.params
        label, max_prob, logits = predict(p, sample)
        if self.method in ("vanilla", "label_smoothing"):
            return label, max_prob
        if self.method == "temperature":
            if self.temperature is None:
                raise ValueError("temperature calibrator is not fitted")
            scaled = softmax(logits / self.temperature)
            return label, float(scaled[label])
        # Self-calibration: P(true) from the correctness head, conditioned on
        # the main head's prediction.
        f = featurize(sample.text_a, sample.text_b, p.features)
        return label, float(forward_calib(p, f, label)[1])

    def build_log(self, d: Dataset, group: str) -> ConfidenceLog:
        """Score every sample, in dataset order, under one group tag."""
        preds = np.empty(len(d), dtype=np.int64)
        conf = np.empty(len(d))
        correct = np.empty(len(d), dtype=np.int64)
        for i, s in enumerate(d.samples):
            label, c = self.score(s)
            preds[i] = label
            conf[i] = c
            correct[i] = int(label == s.label)
        return ConfidenceLog(conf, correct, preds, tuple([group] * len(d)))

    def confidences(self, d: Dataset) -> np.ndarray:
        """Confidence column only (used where gold labels are irrelevant)."""
        return np.array([self.score(s)[1] for s in d.samples])


# ---------------------------------------------------------------------------
# Temperature fitting
# ---------------------------------------------------------------------------

def _mean_nll(logits: np.ndarray, labels: np.ndarray, t: float) -> float:
    z = logits / t
    z = z - z.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


_GRID = np.geomspace(0.01, 100.0, 200)
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def fit_temperature(logits, labels) -> float:
    """T > 0 minimizing the mean NLL of softmax(logits / T).

    A 200-point log-spaced grid over [0.01, 100] locates the minimum, then
    golden-section search refines within the neighboring grid cells.
    Deterministic.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(logits) != len(labels):
        raise ValueError("need one logit row per label")
    if len(labels) < 2 or len(np.unique(labels)) < 2:
        raise ValueError("temperature fitting needs >= 2 records with >= 2 distinct labels")

    nlls = np.array([_mean_nll(logits, labels, t) for t in _GRID])
    i = int(np.argmin(nlls))
    lo = _GRID[max(i - 1, 0)]
    hi = _GRID[min(i + 1, len(_GRID) - 1)]

    # Golden-section on log(T) within the bracket.
    a, b = np.log(lo), np.log(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _mean_nll(logits, labels, float(np.exp(c)))
    fd = _mean_nll(logits, labels, float(np.exp(d)))
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _mean_nll(logits, labels, float(np.exp(c)))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _mean_nll(logits, labels, float(np.exp(d)))
    return float(np.exp((a + b) / 2.0))


def model_logits(params: ModelParameters, d: Dataset) -> np.ndarray:
    return np.array([main_logits(params, featurize(s.text_a, s.text_b, params.features))
                     for s in d.samples])


def train_with_temperature(train: Dataset, cfg, holdout_folds: int = 10
                           ) -> tuple[ModelParameters, float]:
    """Train a plain model on all but a seed-deterministic stratified tenth of
    the training set, and fit T on that held-out tenth.

    Fitting T on data the model trained on degenerates (the memorized slice
    pushes T toward 0 and the scaled confidences saturate), so the slice must
    stay out of training. The returned model backs both the vanilla and the
    temperature calibrator, which keeps their scores directly comparable.
    """
    folds = split_folds(train, holdout_folds, cfg.seed)
    holdout, rest = folds[0], merge_datasets(folds[1:])
    params, _ = train_main(rest, cfg)
    t = fit_temperature(model_logits(params, holdout), holdout.labels())
    return params, t
