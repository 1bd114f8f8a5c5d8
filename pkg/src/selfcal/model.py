"""Deterministic desk-scale classifier with a built-in correctness head.

A hashed bag-of-n-grams featurizer feeds a shared linear encoder with two
heads: a main head over the task classes and a binary head that predicts
whether the main prediction is right, given the sample features and the
predicted label (as a one-hot block appended to the encoder output).

Everything is numpy + plain SGD; training is a pure function of
(dataset order, TrainConfig).
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

LOG_FLOOR = 1e-12

# Calibration-head input masks: "no_sample" zeroes the encoder block,
# "no_prediction" zeroes the predicted-label one-hot block.
FEATURE_MODES = ("all", "no_sample", "no_prediction")

_SEGMENT_B_MARK = "\x02"


@dataclass(frozen=True)
class FeaturizerConfig:
    lowercase: bool = True
    ngram_max: int = 2
    hash_dim: int = 2 ** 18
    segment_tagging: bool = True

    def __post_init__(self):
        if self.ngram_max < 1:
            raise ValueError("ngram_max must be >= 1")
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")


@dataclass(frozen=True)
class SparseVec:
    """Non-negative hashed count vector: sorted unique indices + counts."""

    indices: np.ndarray
    values: np.ndarray
    dim: int


def _tokens(text: str, lowercase: bool) -> list[str]:
    return text.lower().split() if lowercase else text.split()


def _ngram_keys(tokens: list[str], ngram_max: int) -> list[str]:
    keys = []
    for n in range(1, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            keys.append(" ".join(tokens[i:i + n]))
    return keys


def featurize(text_a: str, text_b: str | None = None,
              cfg: FeaturizerConfig = FeaturizerConfig()) -> SparseVec:
    """Hash unigrams..ngram_max of the text(s) into ``cfg.hash_dim`` count buckets.

    Deterministic (crc32-based, unsalted). When ``text_b`` is present and
    segment tagging is on, its tokens carry a marker so "x" in segment a and
    "x" in segment b land in different buckets.
    """
    toks = _tokens(text_a, cfg.lowercase)
    if not toks:
        raise ValueError("text_a has no tokens")
    keys = _ngram_keys(toks, cfg.ngram_max)
    if text_b is not None:
        toks_b = _tokens(text_b, cfg.lowercase)
        if cfg.segment_tagging:
            toks_b = [_SEGMENT_B_MARK + t for t in toks_b]
        keys += _ngram_keys(toks_b, cfg.ngram_max)

    mask = cfg.hash_dim - 1
    counts: dict[int, float] = {}
    for k in keys:
        idx = zlib.crc32(k.encode("utf-8")) & mask
        counts[idx] = counts.get(idx, 0.0) + 1.0
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return SparseVec(indices, values, cfg.hash_dim)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    label_smoothing_epsilon: float = 0.0
    hidden_dim: int = 64
    features: FeaturizerConfig = field(default_factory=FeaturizerConfig)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.label_smoothing_epsilon < 1.0:
            raise ValueError("label_smoothing_epsilon must be in [0, 1)")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass
class ModelParameters:
    """Shared encoder plus the two heads. Mutated in place during training."""

    encoder: np.ndarray        # hash_dim x H
    w_main: np.ndarray         # H x C
    b_main: np.ndarray         # C
    w_calib: np.ndarray        # (H + C) x 2
    b_calib: np.ndarray        # 2
    features: FeaturizerConfig
    num_classes: int
    hidden_dim: int
    seed: int | None = None

    def validate(self):
        h, c = self.hidden_dim, self.num_classes
        if self.encoder.shape != (self.features.hash_dim, h):
            raise ValueError("encoder shape inconsistent with config")
        if self.w_main.shape != (h, c) or self.b_main.shape != (c,):
            raise ValueError("main head shape inconsistent with config")
        if self.w_calib.shape != (h + c, 2) or self.b_calib.shape != (2,):
            raise ValueError("calibration head shape inconsistent with config")
        for a in (self.encoder, self.w_main, self.b_main, self.w_calib, self.b_calib):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite model parameters")


def init_parameters(num_classes: int, cfg: TrainConfig) -> ModelParameters:
    """Encoder ~ U(-0.01, 0.01) from the seed; heads zero, so the untrained
    model outputs exactly uniform distributions."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng((cfg.seed, 0))
    h = cfg.hidden_dim
    return ModelParameters(
        encoder=rng.uniform(-0.01, 0.01, size=(cfg.features.hash_dim, h)),
        w_main=np.zeros((h, num_classes)),
        b_main=np.zeros(num_classes),
        w_calib=np.zeros((h + num_classes, 2)),
        b_calib=np.zeros(2),
        features=cfg.features,
        num_classes=num_classes,
        hidden_dim=h,
        seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def encode(p: ModelParameters, f: SparseVec) -> np.ndarray:
    if f.dim != p.features.hash_dim:
        raise ValueError(f"feature dim {f.dim} != model hash_dim {p.features.hash_dim}")
    return f.values @ p.encoder[f.indices]


def main_logits(p: ModelParameters, f: SparseVec) -> np.ndarray:
    return encode(p, f) @ p.w_main + p.b_main


def forward_main(p: ModelParameters, f: SparseVec) -> np.ndarray:
    """Probability vector over the task classes (softmax of the main logits)."""
    return softmax(main_logits(p, f))


def _calib_input(p: ModelParameters, h: np.ndarray, y_star: int,
                 feature_mode: str) -> np.ndarray:
    if feature_mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature_mode {feature_mode!r}")
    u = np.zeros(p.hidden_dim + p.num_classes)
    if feature_mode != "no_sample":
        u[:p.hidden_dim] = h
    if feature_mode != "no_prediction":
        u[p.hidden_dim + y_star] = 1.0
    return u


def calib_logits(p: ModelParameters, f: SparseVec, y_star: int,
                 feature_mode: str = "all") -> np.ndarray:
    if not 0 <= y_star < p.num_classes:
        raise ValueError(f"y_star {y_star} out of range for {p.num_classes} classes")
    u = _calib_input(p, encode(p, f), y_star, feature_mode)
    return u @ p.w_calib + p.b_calib


def forward_calib(p: ModelParameters, f: SparseVec, y_star: int,
                  feature_mode: str = "all") -> np.ndarray:
    """(P_false, P_true) for "the main prediction y_star is correct"."""
    return softmax(calib_logits(p, f, y_star, feature_mode))


def predict(p: ModelParameters, sample) -> tuple[int, float, np.ndarray]:
    """(predicted label, its probability, full logits); ties go to the lowest index."""
    f = featurize(sample.text_a, sample.text_b, p.features)
    z = main_logits(p, f)
    probs = softmax(z)
    label = int(np.argmax(probs))
    return label, float(probs[label]), z


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, LOG_FLOOR))


def smooth_target(label: int, num_classes: int, epsilon: float) -> np.ndarray:
    """Target distribution: 1-eps on the label, eps/(C-1) spread over the rest."""
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range")
    t = np.full(num_classes, epsilon / (num_classes - 1))
    t[label] = 1.0 - epsilon
    return t


def loss_ce(probs: np.ndarray, label: int, epsilon: float = 0.0) -> float:
    """Cross-entropy against the (optionally smoothed) target, log-floored at 1e-12."""
    t = smooth_target(label, len(probs), epsilon)
    return float(-(t * _safe_log(probs)).sum())


def loss_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with 1e-12 floors inside the logs; >= 0, and 0 iff p == q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float((p * (_safe_log(p) - _safe_log(q))).sum())


# ---------------------------------------------------------------------------
# Gradients (analytic; checked against finite differences in the tests)
# ---------------------------------------------------------------------------

@dataclass
class Grads:
    """Batch-mean gradients. Encoder gradients stay sparse: per-row contributions
    at ``enc_rows`` (rows may repeat; accumulation happens at update time)."""

    w_main: np.ndarray
    b_main: np.ndarray
    w_calib: np.ndarray
    b_calib: np.ndarray
    enc_rows: np.ndarray
    enc_vals: np.ndarray

    @classmethod
    def zeros(cls, p: ModelParameters) -> "Grads":
        return cls(
            w_main=np.zeros_like(p.w_main),
            b_main=np.zeros_like(p.b_main),
            w_calib=np.zeros_like(p.w_calib),
            b_calib=np.zeros_like(p.b_calib),
            enc_rows=np.empty(0, dtype=np.int64),
            enc_vals=np.empty((0, p.hidden_dim)),
        )

    def add(self, other: "Grads") -> "Grads":
        return Grads(
            w_main=self.w_main + other.w_main,
            b_main=self.b_main + other.b_main,
            w_calib=self.w_calib + other.w_calib,
            b_calib=self.b_calib + other.b_calib,
            enc_rows=np.concatenate([self.enc_rows, other.enc_rows]),
            enc_vals=np.concatenate([self.enc_vals, other.enc_vals]),
        )

    def scaled(self, a: float) -> "Grads":
        return Grads(self.w_main * a, self.b_main * a, self.w_calib * a,
                     self.b_calib * a, self.enc_rows, self.enc_vals * a)


def apply_grads(p: ModelParameters, g: Grads, lr: float) -> None:
    p.w_main -= lr * g.w_main
    p.b_main -= lr * g.b_main
    p.w_calib -= lr * g.w_calib
    p.b_calib -= lr * g.b_calib
    if len(g.enc_rows):
        np.subtract.at(p.encoder, g.enc_rows, lr * g.enc_vals)


def main_batch_grads(p: ModelParameters, vecs: list[SparseVec], labels,
                     epsilon: float = 0.0) -> tuple[float, Grads]:
    """Mean cross-entropy of the main head over a batch, with its gradients."""
    g = Grads.zeros(p)
    n = len(vecs)
    loss = 0.0
    rows, vals = [], []
    for f, y in zip(vecs, labels):
        h = encode(p, f)
        probs = softmax(h @ p.w_main + p.b_main)
        t = smooth_target(int(y), p.num_classes, epsilon)
        loss += -(t * _safe_log(probs)).sum()
        dz = (probs - t) / n
        g.w_main += np.outer(h, dz)
        g.b_main += dz
        dh = p.w_main @ dz
        rows.append(f.indices)
        vals.append(f.values[:, None] * dh[None, :])
    g.enc_rows = np.concatenate(rows) if rows else g.enc_rows
    g.enc_vals = np.concatenate(vals) if vals else g.enc_vals
    return loss / n, g


def calib_batch_grads(p: ModelParameters, vecs: list[SparseVec], y_stars, cs,
                      epsilon: float = 0.0,
                      feature_mode: str = "all") -> tuple[float, Grads]:
    """Mean cross-entropy of the calibration head over (x, y*, c) triples."""
    g = Grads.zeros(p)
    n = len(vecs)
    loss = 0.0
    rows, vals = [], []
    hd = p.hidden_dim
    for f, y_star, c in zip(vecs, y_stars, cs):
        h = encode(p, f)
        u = _calib_input(p, h, int(y_star), feature_mode)
        probs = softmax(u @ p.w_calib + p.b_calib)
        t = smooth_target(int(c), 2, epsilon)
        loss += -(t * _safe_log(probs)).sum()
        dz = (probs - t) / n
        g.w_calib += np.outer(u, dz)
        g.b_calib += dz
        if feature_mode != "no_sample":
            dh = p.w_calib[:hd] @ dz
            rows.append(f.indices)
            vals.append(f.values[:, None] * dh[None, :])
    if rows:
        g.enc_rows = np.concatenate(rows)
        g.enc_vals = np.concatenate(vals)
    return loss / n, g


def consistency_batch_grads(p: ModelParameters, clean_vecs: list[SparseVec],
                            aug_vecs: list[SparseVec], y_stars,
                            feature_mode: str = "all") -> tuple[float, Grads]:
    """Mean KL(calib(x, y*) || calib(x*, y*)) over a batch of augmented pairs.

    Gradients flow through both branches: for r = softmax(z_clean) and
    s = softmax(z_aug), dKL/dz_clean = r*log(r/s) - KL*r and dKL/dz_aug = s - r.
    """
    g = Grads.zeros(p)
    n = len(clean_vecs)
    loss = 0.0
    rows, vals = [], []
    hd = p.hidden_dim
    for fc, fa, y_star in zip(clean_vecs, aug_vecs, y_stars):
        y_star = int(y_star)
        hc = encode(p, fc)
        ha = encode(p, fa)
        uc = _calib_input(p, hc, y_star, feature_mode)
        ua = _calib_input(p, ha, y_star, feature_mode)
        r = softmax(uc @ p.w_calib + p.b_calib)
        s = softmax(ua @ p.w_calib + p.b_calib)
        log_ratio = _safe_log(r) - _safe_log(s)
        kl = float((r * log_ratio).sum())
        loss += kl
        dzc = (r * log_ratio - kl * r) / n
        dza = (s - r) / n
        g.w_calib += np.outer(uc, dzc) + np.outer(ua, dza)
        g.b_calib += dzc + dza
        if feature_mode != "no_sample":
            for f, dz in ((fc, dzc), (fa, dza)):
                dh = p.w_calib[:hd] @ dz
                rows.append(f.indices)
                vals.append(f.values[:, None] * dh[None, :])
    if rows:
        g.enc_rows = np.concatenate(rows)
        g.enc_vals = np.concatenate(vals)
    return loss / n, g


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def featurize_dataset(d, cfg: FeaturizerConfig) -> list[SparseVec]:
    return [featurize(s.text_a, s.text_b, cfg) for s in d.samples]


def train_main(d, cfg: TrainConfig) -> tuple[ModelParameters, list[float]]:
    """Shuffled mini-batch SGD on the mean main-task cross-entropy.

    Returns the parameters and the per-step training-loss trace. Deterministic
    given (dataset order, cfg).
    """
    if len(d) == 0:
        raise ValueError("empty dataset")
    p = init_parameters(d.num_classes, cfg)
    vecs = featurize_dataset(d, cfg.features)
    labels = d.labels()
    rng = np.random.default_rng((cfg.seed, 1))
    trace: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(d))
        for start in range(0, len(d), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, g = main_batch_grads(
                p, [vecs[i] for i in batch], labels[batch],
                cfg.label_smoothing_epsilon)
            apply_grads(p, g, cfg.learning_rate)
            trace.append(loss)
    return p, trace


# ---------------------------------------------------------------------------
# Flattening and serialization
# ---------------------------------------------------------------------------

_TENSOR_ORDER = ("encoder", "w_main", "b_main", "w_calib", "b_calib")


def get_flat_params(p: ModelParameters) -> np.ndarray:
    return np.concatenate([getattr(p, name).ravel() for name in _TENSOR_ORDER])


def set_flat_params(p: ModelParameters, flat: np.ndarray) -> None:
    pos = 0
    for name in _TENSOR_ORDER:
        arr = getattr(p, name)
        nxt = pos + arr.size
        arr[...] = flat[pos:nxt].reshape(arr.shape)
        pos = nxt
    if pos != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")


def save_parameters(p: ModelParameters, path) -> None:
    """One file: a JSON header line (dims, featurizer config, seed) followed by
    the raw little-endian float64 tensors in a fixed order."""
    p.validate()
    header = {
        "format": "selfcal-model-v1",
        "num_classes": p.num_classes,
        "hidden_dim": p.hidden_dim,
        "seed": p.seed,
        "features": {
            "lowercase": p.features.lowercase,
            "ngram_max": p.features.ngram_max,
            "hash_dim": p.features.hash_dim,
            "segment_tagging": p.features.segment_tagging,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in _TENSOR_ORDER:
            fh.write(np.ascontiguousarray(getattr(p, name), dtype="<f8").tobytes())


def load_parameters(path) -> ModelParameters:
    with open(Path(path), "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "selfcal-model-v1":
            raise ValueError(f"{path}: not a selfcal model file")
        feats = FeaturizerConfig(**header["features"])
        c, h = header["num_classes"], header["hidden_dim"]
        p = ModelParameters(
            encoder=np.zeros((feats.hash_dim, h)),
            w_main=np.zeros((h, c)),
            b_main=np.zeros(c),
            w_calib=np.zeros((h + c, 2)),
            b_calib=np.zeros(2),
            features=feats,
            num_classes=c,
            hidden_dim=h,
            seed=header.get("seed"),
        )
        for name in _TENSOR_ORDER:
            arr = getattr(p, name)
            buf = fh.read(arr.size * 8)
            if len(buf) != arr.size * 8:
                raise ValueError(f"{path}: truncated tensor {name}")
            arr[...] = np.frombuffer(buf, dtype="<f8").reshape(arr.shape)
    p.validate()
    return p


def clone_parameters(p: ModelParameters) -> ModelParameters:
    return replace(
        p,
        encoder=p.encoder.copy(),
        w_main=p.w_main.copy(),
        b_main=p.b_main.copy(),
        w_calib=p.w_calib.copy(),
        b_calib=p.b_calib.copy(),
    )
