"""Downstream evaluations of confidence scores: selective classification,
adversarial-sample detection, model cascading, and the pilot sweeps that
quantify what drives the self-calibration task (calibration-set size, class
imbalance, input features, and the number of annotation folds).

All evaluators are deterministic given (calibrator, datasets, seed) and return
plain dicts ready for JSON/CSV serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .augment import SynonymLexicon
from .calibrators import Calibrator, ConfidenceLog
from .corpus import CalibrationRecord, Dataset
from .metrics import (
    DEFAULT_THRESHOLD_GRID,
    accuracy_coverage_curve,
    auroc,
    auroc_risk,
    cascade_curve,
    coverage_at_risk,
    delta_conf,
    detection_f1,
    risk_coverage,
)
from .model import (
    ModelParameters,
    TrainConfig,
    featurize,
    forward_calib,
    predict,
    train_main,
)
from .toast import ToastConfig, annotate_with_model, downsample_balance, run_toast, train_multitask


# ---------------------------------------------------------------------------
# Selective classification
# ---------------------------------------------------------------------------

def selective_eval(calibrator: Calibrator, d: Dataset, targets) -> dict:
    """Risk-coverage behaviour of one calibrator on one dataset.

    Reports the area-style risk score, the best coverage at each target
    accuracy, and the full curves. The risk score is None when the log is
    degenerate (no correct or no wrong predictions to rank).
    """
    log = calibrator.build_log(d, group="id")
    try:
        risk_score = auroc_risk(log)
    except ValueError:
        risk_score = None
    return {
        "method": calibrator.method,
        "auroc_risk": risk_score,
        "coverage_at_risk": {f"{t:g}": coverage_at_risk(log, float(t)) for t in targets},
        "risk_coverage": risk_coverage(log),
        "accuracy_coverage": accuracy_coverage_curve(log),
        "log": log,
    }


# ---------------------------------------------------------------------------
# Adversarial-sample detection
# ---------------------------------------------------------------------------

def adversarial_eval(calibrator: Calibrator, id_samples: Dataset,
                     adv_samples: Dataset, max_id: int = 1000,
                     seed: int = 0) -> dict:
    """Score a mix of in-distribution and adversarial samples.

    At most ``max_id`` ID samples are drawn (seed-deterministic, without
    replacement) and compared against all adversarial samples: AUROC and the
    confidence gap of ID over adversarial, plus macro-F1 of the rule "flag
    confidence < t as adversarial" over the 0.01 threshold grid.
    """
    if len(adv_samples) == 0:
        raise ValueError("empty adversarial set")
    if len(id_samples) > max_id:
        rng = np.random.default_rng((seed, 7))
        picked = np.sort(rng.choice(len(id_samples), size=max_id, replace=False))
        id_samples = id_samples.subset(picked)
    id_scores = calibrator.confidences(id_samples)
    adv_scores = calibrator.confidences(adv_samples)
    return {
        "method": calibrator.method,
        "auroc": auroc(id_scores, adv_scores),
        "delta_conf": delta_conf(id_scores, adv_scores),
        "detection_f1": [(float(t), detection_f1(id_scores, adv_scores, float(t)))
                         for t in DEFAULT_THRESHOLD_GRID],
        "id_scores": id_scores,
        "adv_scores": adv_scores,
        "n_id": len(id_samples),
        "n_adv": len(adv_samples),
    }


# ---------------------------------------------------------------------------
# Model cascading
# ---------------------------------------------------------------------------

def cascade_eval(small: Calibrator, large_params: ModelParameters, d: Dataset,
                 thresholds=None) -> dict:
    """Accuracy of routing low-confidence samples from the small model to the
    large one, swept over thresholds, plus the area score and routing load."""
    small_log = small.build_log(d, group="id")
    large_correct = np.array(
        [int(predict(large_params, s)[0] == s.label) for s in d.samples],
        dtype=np.int64)
    points, area = cascade_curve(small_log, large_correct, thresholds)
    grid = np.asarray(DEFAULT_THRESHOLD_GRID if thresholds is None else thresholds,
                      dtype=np.float64)
    routed = [(float(t), float((small_log.confidence < t).mean())) for t in grid]
    return {
        "method": small.method,
        "area": area,
        "curve": points,
        "routed_fraction": routed,
        "small_accuracy": float(small_log.correct.mean()),
        "large_accuracy": float(large_correct.mean()),
    }


# ---------------------------------------------------------------------------
# Pilot sweeps
# ---------------------------------------------------------------------------

SWEEP_KINDS = ("size", "imbalance", "features", "k")
FEATURE_MODES = ("all", "no_prediction", "no_sample")


@dataclass(frozen=True)
class PilotSweepConfig:
    """Grids and training settings for the pilot sweeps. ``annotator`` trains
    the model whose predictions label the calibration pool; ``train`` drives
    the per-grid-point multi-task training."""

    annotator: TrainConfig
    train: TrainConfig
    seeds: tuple[int, ...] = (0, 1, 2)
    sizes: tuple[int, ...] = (30, 120, 480)
    ratios: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    fixed_factors: tuple[int, ...] = (1, 2, 4, 8)
    ks: tuple[int, ...] = (2, 3, 4, 5)


def score_with_calibration_head(params: ModelParameters, d: Dataset,
                                feature_mode: str = "all") -> ConfidenceLog:
    """Confidence log where confidence is the correctness head's P(true),
    with the same input masking the head was trained under."""
    preds = np.empty(len(d), dtype=np.int64)
    conf = np.empty(len(d))
    correct = np.empty(len(d), dtype=np.int64)
    for i, s in enumerate(d.samples):
        label, _, _ = predict(params, s)
        f = featurize(s.text_a, s.text_b, params.features)
        preds[i] = label
        conf[i] = float(forward_calib(params, f, label, feature_mode)[1])
        correct[i] = int(label == s.label)
    return ConfidenceLog(conf, correct, preds, tuple(["id"] * len(d)))


def _log_auroc_dconf(log: ConfidenceLog) -> tuple[float | None, float | None]:
    pos = log.confidence[log.correct == 1]
    neg = log.confidence[log.correct == 0]
    if pos.size == 0 or neg.size == 0:
        return None, None
    return auroc(pos, neg), delta_conf(pos, neg)


def _pilot_point(train: Dataset, test: Dataset, records, cfg: PilotSweepConfig,
                 seed: int, feature_mode: str = "all"
                 ) -> tuple[float | None, float | None]:
    """Train one multi-task model on (train, records) and measure the
    calibration head on the test split."""
    tc = replace(cfg.train, seed=cfg.train.seed + seed)
    params, _ = train_multitask(
        train, records, [], ToastConfig(train=tc, no_augment=True), feature_mode)
    return _log_auroc_dconf(score_with_calibration_head(params, test, feature_mode))


def _aggregate(point_id: str, kind: str, per_seed, extra: dict) -> dict:
    aurocs = [a for a, _ in per_seed if a is not None]
    dconfs = [c for _, c in per_seed if c is not None]
    row = {"kind": kind, "point_id": point_id, "n_seeds": len(aurocs), "skipped": "",
           **extra}
    if aurocs:
        row.update(
            auroc_mean=float(np.mean(aurocs)), auroc_std=float(np.std(aurocs)),
            dconf_mean=float(np.mean(dconfs)), dconf_std=float(np.std(dconfs)))
    else:
        row.update(auroc_mean=None, auroc_std=None, dconf_mean=None, dconf_std=None,
                   skipped="degenerate evaluation (single correctness class)")
    return row


def _skipped(point_id: str, kind: str, reason: str, extra: dict) -> dict:
    return {"kind": kind, "point_id": point_id, "n_seeds": 0, "skipped": reason,
            "auroc_mean": None, "auroc_std": None, "dconf_mean": None,
            "dconf_std": None, **extra}


def seed_annotations(train: Dataset, pool: Dataset, cfg: PilotSweepConfig
                     ) -> dict[int, list[CalibrationRecord]]:
    """One annotated copy of the pool per sweep seed (the expensive shared
    step; every grid point reuses these)."""
    out = {}
    for seed in cfg.seeds:
        annotator_cfg = replace(cfg.annotator, seed=cfg.annotator.seed + seed)
        params, _ = train_main(train, annotator_cfg)
        out[seed] = annotate_with_model(params, pool)
    return out


def grid_points(kind: str, cfg: PilotSweepConfig) -> list[dict]:
    """The canonical, ordered grid for one sweep kind. Each point is a spec
    dict with a stable ``point_id``."""
    if kind == "size":
        return [{"kind": "size", "point_id": f"size={n}", "size": n}
                for n in sorted(cfg.sizes)]
    if kind == "imbalance":
        points = [{"kind": "imbalance", "point_id": f"ratio={r:g}",
                   "mode": "ratio", "ratio": r} for r in sorted(cfg.ratios)]
        for mode in ("fixed_negative", "fixed_positive"):
            points += [{"kind": "imbalance", "point_id": f"{mode}_x{f}",
                        "mode": mode, "factor": f} for f in sorted(cfg.fixed_factors)]
        return points
    if kind == "features":
        return [{"kind": "features", "point_id": f"features={m}", "feature_mode": m}
                for m in FEATURE_MODES]
    if kind == "k":
        return [{"kind": "k", "point_id": f"k={k}", "k": k} for k in sorted(cfg.ks)]
    raise ValueError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")


def _shuffled_by_class(records, rng_seed) -> tuple[list, list]:
    rng = np.random.default_rng(rng_seed)
    neg = [r for r in records if r.correctness == 0]
    pos = [r for r in records if r.correctness == 1]
    rng.shuffle(neg)
    rng.shuffle(pos)
    return neg, pos


def evaluate_point(point: dict, train: Dataset, test: Dataset,
                   cfg: PilotSweepConfig, annotations, lexicon=None) -> dict:
    """Run one grid point across all seeds and aggregate. Seeds for which the
    point is infeasible are dropped; a point infeasible everywhere comes back
    as a skipped row with the reason."""
    kind = point["kind"]
    extra = {k: v for k, v in point.items() if k not in ("kind", "point_id")}
    per_seed: list[tuple[float | None, float | None]] = []
    reasons: list[str] = []

    if kind == "k":
        for seed in cfg.seeds:
            toast_cfg = ToastConfig(
                k=point["k"],
                train=replace(cfg.train, seed=cfg.train.seed + seed),
                annotator_train=replace(cfg.annotator, seed=cfg.annotator.seed + seed),
            )
            params, _ = run_toast(train, toast_cfg, lexicon)
            log = Calibrator("toast", params).build_log(test, "id")
            per_seed.append(_log_auroc_dconf(log))
    else:
        for seed in cfg.seeds:
            records = annotations[seed]
            subset = None
            mode = "all"
            if kind == "size":
                n = point["size"]
                if n > len(records):
                    reasons.append(f"seed {seed}: pool has {len(records)} < {n} records")
                    continue
                order = np.random.default_rng((cfg.train.seed + seed, 8)).permutation(len(records))
                subset = [records[i] for i in order[:n]]
            elif kind == "features":
                mode = point["feature_mode"]
                subset = downsample_balance(
                    records, np.random.default_rng((cfg.train.seed + seed, 10)))
            else:  # imbalance
                neg, pos = _shuffled_by_class(records, (cfg.train.seed + seed, 9))
                if point["mode"] == "ratio":
                    max_side = max(max(cfg.ratios), 1.0 - min(cfg.ratios))
                    total = int(min(len(neg), len(pos)) / max_side)
                    n_neg = round(point["ratio"] * total)
                    n_pos = total - n_neg
                    if n_neg < 1 or n_pos < 1 or n_neg > len(neg) or n_pos > len(pos):
                        reasons.append(
                            f"seed {seed}: cannot draw {n_neg}/{n_pos} from "
                            f"{len(neg)} negatives / {len(pos)} positives")
                        continue
                    subset = neg[:n_neg] + pos[:n_pos]
                else:
                    factor = point["factor"]
                    if point["mode"] == "fixed_negative":
                        base = min(len(neg), len(pos) // max(cfg.fixed_factors))
                        feasible = base >= 1 and base * factor <= len(pos)
                        if feasible:
                            subset = neg[:base] + pos[:base * factor]
                    else:
                        base = min(len(pos), len(neg) // max(cfg.fixed_factors))
                        feasible = base >= 1 and base * factor <= len(neg)
                        if feasible:
                            subset = pos[:base] + neg[:base * factor]
                    if subset is None:
                        reasons.append(
                            f"seed {seed}: class too small for factor {factor} "
                            f"({len(neg)} negatives / {len(pos)} positives)")
                        continue
            per_seed.append(_pilot_point(train, test, subset, cfg, seed, mode))

    if not per_seed:
        return _skipped(point["point_id"], kind, "; ".join(reasons) or "infeasible", extra)
    return _aggregate(point["point_id"], kind, per_seed, extra)


def pilot_sweeps(train: Dataset, pool: Dataset, test: Dataset, kind: str,
                 cfg: PilotSweepConfig, lexicon: SynonymLexicon | None = None,
                 skip=frozenset(), on_row=None) -> list[dict]:
    """Run one sweep kind over its canonical grid.

    Rows carry per-point mean/std over the seeds plus a ``skipped`` reason for
    infeasible points. Points whose ``point_id`` is in ``skip`` are not
    recomputed (they are omitted from the result); ``on_row`` is invoked after
    each completed row, which lets callers persist progress incrementally.
    """
    points = [p for p in grid_points(kind, cfg) if p["point_id"] not in skip]
    if kind == "k" and lexicon is None:
        raise ValueError("the k sweep needs a synonym lexicon")
    annotations = None
    if kind != "k" and points:
        annotations = seed_annotations(train, pool, cfg)
    rows = []
    for point in points:
        row = evaluate_point(point, train, test, cfg, annotations, lexicon)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows
