"""Textual transforms for augmentation and a greedy word-substitution attacker.

Four transforms on whitespace tokens: synonym substitution, random insertion,
adjacent swap, and random deletion. All of them preserve at least one token.
The attacker greedily substitutes synonyms to flip a model's prediction.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import Dataset, Sample, SynthConfig, class_tokens, noise_tokens
from .model import ModelParameters, featurize, forward_main, predict


class TransformKind(Enum):
    SYNONYM_SUBSTITUTION = "synonym_substitution"
    RANDOM_INSERTION = "random_insertion"
    RANDOM_SWAP = "random_swap"
    RANDOM_DELETION = "random_deletion"


class SynonymLexicon:
    """Case-normalized token -> synonyms map. No token maps to an empty list."""

    def __init__(self, entries: dict[str, list[str]]):
        self._entries: dict[str, list[str]] = {}
        for word, syns in entries.items():
            if not syns:
                raise ValueError(f"lexicon entry {word!r} has no synonyms")
            self._entries[word.lower()] = list(syns)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._entries

    def synonyms(self, token: str) -> list[str]:
        return self._entries.get(token.lower(), [])

    @classmethod
    def from_tsv(cls, path) -> "SynonymLexicon":
        """Load ``word<TAB>syn1,syn2,...`` lines."""
        entries: dict[str, list[str]] = {}
        with open(Path(path), encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>synonyms'")
                syns = [s.strip() for s in parts[1].split(",") if s.strip()]
                if not syns:
                    raise ValueError(f"{path}:{lineno}: no synonyms for {parts[0]!r}")
                entries[parts[0].strip()] = syns
        return cls(entries)

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word in sorted(self._entries):
                fh.write(f"{word}\t{','.join(self._entries[word])}\n")


def synthetic_lexicon(cfg: SynthConfig, group_size: int = 4) -> SynonymLexicon:
    """Default lexicon over the synthetic vocabulary.

    Tokens that play the same role (same class block, or both noise) form
    small synsets. Class-indicative tokens additionally get two generic noise
    tokens as looser synonyms — the analogue of a real lexicon offering a
    blander word that drops the nuance, which is what gives substitution its
    bite for both augmentation and attacks.
    """
    entries: dict[str, list[str]] = {}
    noise = noise_tokens(cfg)

    def _add_groups(tokens: list[str], extras: bool):
        for start in range(0, len(tokens), group_size):
            group = tokens[start:start + group_size]
            for j, t in enumerate(group):
                syns = [s for s in group if s != t]
                if extras:
                    k = (start + j) * 2
                    syns += [noise[k % len(noise)], noise[(k + 1) % len(noise)]]
                if syns:
                    entries[t] = syns

    for cls in range(cfg.num_classes):
        _add_groups(class_tokens(cfg, cls), extras=True)
    _add_groups(noise, extras=False)
    return SynonymLexicon(entries)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def _edit_count(rate: float, n: int) -> int:
    return max(1, math.ceil(rate * n))


def apply_transform(kind: TransformKind, text: str, rate: float,
                    lexicon: SynonymLexicon, rng: np.random.Generator) -> str:
    """Apply one transform at intensity ``rate`` in (0, 1]. The output always
    has at least one token; no-op results are legal (e.g. swapping a 1-token
    text, or substituting when nothing has a lexicon entry)."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    tokens = text.split()
    if not tokens:
        raise ValueError("text has no tokens")
    n = len(tokens)

    if kind is TransformKind.SYNONYM_SUBSTITUTION:
        k = min(_edit_count(rate, n), n)
        positions = rng.choice(n, size=k, replace=False)
        for pos in sorted(int(i) for i in positions):
            syns = lexicon.synonyms(tokens[pos])
            if syns:
                tokens[pos] = syns[int(rng.integers(0, len(syns)))]

    elif kind is TransformKind.RANDOM_INSERTION:
        for _ in range(_edit_count(rate, n)):
            src = tokens[int(rng.integers(0, len(tokens)))]
            syns = lexicon.synonyms(src)
            if syns and rng.random() < 0.5:
                new = syns[int(rng.integers(0, len(syns)))]
            else:
                new = src  # repeat an existing word
            tokens.insert(int(rng.integers(0, len(tokens) + 1)), new)

    elif kind is TransformKind.RANDOM_SWAP:
        if n >= 2:
            for _ in range(_edit_count(rate, n)):
                i = int(rng.integers(0, len(tokens) - 1))
                tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]

    elif kind is TransformKind.RANDOM_DELETION:
        kept = [t for t in tokens if rng.random() >= rate]
        if not kept:
            kept = [tokens[int(rng.integers(0, len(tokens)))]]
        tokens = kept

    else:
        raise ValueError(f"unknown transform kind {kind!r}")

    return " ".join(tokens)


def random_transform(text: str, rate: float, lexicon: SynonymLexicon,
                     rng: np.random.Generator) -> tuple[TransformKind, str]:
    """Pick one of the four transforms uniformly and apply it."""
    kinds = list(TransformKind)
    kind = kinds[int(rng.integers(0, len(kinds)))]
    return kind, apply_transform(kind, text, rate, lexicon, rng)


# ---------------------------------------------------------------------------
# Greedy substitution attack
# ---------------------------------------------------------------------------

def greedy_attack(p: ModelParameters, s: Sample, lexicon: SynonymLexicon,
                  budget: int) -> Sample | None:
    """Flip the model's prediction by substituting synonyms, one position per
    step, always taking the substitution that most lowers the gold-class
    probability. Returns the adversarial sample on a prediction flip, or None
    once the budget is exhausted (or no substitution lowers the probability).

    Only correctly classified samples may be attacked.
    """
    pred, _, _ = predict(p, s)
    if pred != s.label:
        raise ValueError("attack requires a correctly classified input")

    tokens = s.text_a.split()
    gold = s.label

    def gold_prob(toks: list[str]) -> float:
        f = featurize(" ".join(toks), s.text_b, p.features)
        return float(forward_main(p, f)[gold])

    current = gold_prob(tokens)
    for _ in range(budget):
        best: tuple[float, int, str] | None = None
        for pos, tok in enumerate(tokens):
            for syn in lexicon.synonyms(tok):
                if syn == tok:
                    continue
                trial = tokens.copy()
                trial[pos] = syn
                prob = gold_prob(trial)
                if prob < current and (best is None or prob < best[0]):
                    best = (prob, pos, syn)
        if best is None:
            return None
        current, pos, syn = best
        tokens[pos] = syn
        text = " ".join(tokens)
        adv = Sample(id=f"{s.id}#adv", text_a=text, text_b=s.text_b, label=s.label)
        if predict(p, adv)[0] != gold:
            return adv
    return None


def attack_dataset(p: ModelParameters, d: Dataset, lexicon: SynonymLexicon,
                   budget: int, max_successes: int | None = None
                   ) -> tuple[Dataset, list[str]]:
    """Attack every correctly classified sample until ``max_successes`` hits.

    Returns the successful adversarial samples as a dataset (gold labels kept)
    plus the originating sample ids, aligned.
    """
    adv_samples: list[Sample] = []
    origins: list[str] = []
    for s in d.samples:
        if max_successes is not None and len(adv_samples) >= max_successes:
            break
        if predict(p, s)[0] != s.label:
            continue
        adv = greedy_attack(p, s, lexicon, budget)
        if adv is not None:
            adv_samples.append(adv)
            origins.append(s.id)
    return Dataset(tuple(adv_samples), d.label_names, d.task_kind), origins


def save_adversarial(d: Dataset, origins: list[str], path) -> None:
    """Corpus JSONL schema plus an ``origin_id`` key per record."""
    if len(origins) != len(d):
        raise ValueError("origins not aligned with adversarial samples")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"label_names": list(d.label_names),
                             "task_kind": d.task_kind}) + "\n")
        for s, origin in zip(d.samples, origins):
            obj = {"id": s.id, "text": s.text_a,
                   "label": d.label_names[s.label], "origin_id": origin}
            if s.text_b is not None:
                obj["text_pair"] = s.text_b
            fh.write(json.dumps(obj) + "\n")
