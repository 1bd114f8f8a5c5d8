"""Data model, JSONL ingestion, fold splitting, and the synthetic generator."""

import json
from collections import Counter

import numpy as np
import pytest

from selfcal.corpus import (
    Dataset,
    Sample,
    SynthConfig,
    generate_synthetic,
    load_dataset,
    load_hardness,
    merge_datasets,
    save_dataset,
    save_hardness,
    split_folds,
)
from selfcal.model import FeaturizerConfig, TrainConfig, predict, train_main


def _write_jsonl(path, lines):
    path.write_text("\n".join(json.dumps(obj) for obj in lines) + "\n")


class TestLoadDataset:
    def test_three_line_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        _write_jsonl(p, [
            {"text": "terrible stuff", "label": "bad"},
            {"text": "lovely stuff", "label": "good"},
            {"text": "plain stuff", "label": "neutral"},
        ])
        d = load_dataset(p)
        assert len(d) == 3
        assert d.num_classes == 3
        assert d.label_names == ("bad", "good", "neutral")  # first-seen order
        assert [s.label for s in d.samples] == [0, 1, 2]

    def test_empty_file_errors(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("")
        with pytest.raises(ValueError, match="no samples"):
            load_dataset(p)

    def test_duplicate_ids_error_names_the_id(self, tmp_path):
        p = tmp_path / "d.jsonl"
        _write_jsonl(p, [
            {"id": "a1", "text": "x y", "label": "p"},
            {"id": "a1", "text": "y z", "label": "q"},
        ])
        with pytest.raises(ValueError, match="a1"):
            load_dataset(p)

    def test_malformed_line_reports_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"text": "ok", "label": "a"}\n{not json\n')
        with pytest.raises(ValueError, match=":2:"):
            load_dataset(p)

    def test_header_fixes_label_names(self, tmp_path):
        p = tmp_path / "d.jsonl"
        _write_jsonl(p, [
            {"label_names": ["neg", "pos"]},
            {"text": "fine", "label": "pos"},
            {"text": "bad", "label": "neg"},
        ])
        d = load_dataset(p)
        assert d.label_names == ("neg", "pos")
        assert [s.label for s in d.samples] == [1, 0]

    def test_unknown_label_with_fixed_names(self, tmp_path):
        p = tmp_path / "d.jsonl"
        _write_jsonl(p, [
            {"label_names": ["neg", "pos"]},
            {"text": "fine", "label": "meh"},
        ])
        with pytest.raises(ValueError, match="meh"):
            load_dataset(p)

    def test_pair_task_requires_text_pair(self, tmp_path):
        p = tmp_path / "d.jsonl"
        _write_jsonl(p, [{"text": "one", "label": "a"}])
        with pytest.raises(ValueError, match="text_pair"):
            load_dataset(p, task_kind="pair")

    def test_roundtrip_lossless(self, tmp_path, synth_data):
        p = tmp_path / "d.jsonl"
        save_dataset(synth_data.train, p)
        loaded = load_dataset(p)
        assert loaded.label_names == synth_data.train.label_names
        assert loaded.task_kind == synth_data.train.task_kind
        assert loaded.samples == synth_data.train.samples

    def test_pair_roundtrip(self, tmp_path):
        d = Dataset(
            (Sample("1", "a b", "c d", 0), Sample("2", "e", "f", 1)),
            ("no", "yes"), "pair")
        p = tmp_path / "d.jsonl"
        save_dataset(d, p)
        assert load_dataset(p).samples == d.samples


class TestDatasetInvariants:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Dataset((Sample("x", "a", None, 0), Sample("x", "b", None, 1)), ("p", "q"))

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            Dataset((Sample("x", "a", None, 5),), ("p", "q"))

    def test_needs_two_label_names(self):
        with pytest.raises(ValueError, match="2 label names"):
            Dataset((Sample("x", "a", None, 0),), ("only",))


class TestSplitFolds:
    def test_even_split(self, synth_data):
        d = synth_data.train.subset(range(10))
        folds = split_folds(d, 2, seed=0)
        assert [len(f) for f in folds] == [5, 5]
        ids = sorted(i for f in folds for i in f.ids())
        assert ids == sorted(d.ids())

    def test_sizes_differ_by_at_most_one(self, synth_data):
        d = synth_data.train.subset(range(9))
        sizes = sorted(len(f) for f in split_folds(d, 2, seed=0))
        assert sizes == [4, 5]

    def test_stratified_exact_counts(self):
        # 50/50 over two classes: every fold must hold 25 of each.
        samples = tuple(Sample(f"s{i}", f"tok{i} filler", None, i % 2) for i in range(100))
        d = Dataset(samples, ("a", "b"))
        for fold in split_folds(d, 2, seed=11):
            counts = Counter(s.label for s in fold.samples)
            assert counts[0] == 25 and counts[1] == 25

    def test_per_class_counts_within_one(self, synth_data):
        d = synth_data.train
        for k in (2, 3, 7):
            folds = split_folds(d, k, seed=4)
            for cls in range(d.num_classes):
                per = [sum(1 for s in f.samples if s.label == cls) for f in folds]
                assert max(per) - min(per) <= 1

    def test_partition_property(self, synth_data):
        d = synth_data.train
        rng = np.random.default_rng(0)
        for _ in range(10):
            k = int(rng.integers(2, 8))
            folds = split_folds(d, k, seed=int(rng.integers(0, 1000)))
            all_ids = [i for f in folds for i in f.ids()]
            assert sorted(all_ids) == sorted(d.ids())
            assert len(set(all_ids)) == len(all_ids)

    def test_deterministic(self, synth_data):
        a = split_folds(synth_data.train, 3, seed=9)
        b = split_folds(synth_data.train, 3, seed=9)
        assert [f.ids() for f in a] == [f.ids() for f in b]

    def test_too_many_folds(self, synth_data):
        small = synth_data.train.subset(range(3))
        with pytest.raises(ValueError):
            split_folds(small, 4, seed=0)
        with pytest.raises(ValueError):
            split_folds(small, 1, seed=0)


class TestMergeDatasets:
    def test_merge_restores_partition(self, synth_data):
        folds = split_folds(synth_data.train, 4, seed=2)
        merged = merge_datasets(folds)
        assert sorted(merged.ids()) == sorted(synth_data.train.ids())

    def test_merge_rejects_mismatched_labels(self):
        a = Dataset((Sample("1", "x", None, 0),), ("p", "q"))
        b = Dataset((Sample("2", "y", None, 0),), ("p", "r"))
        with pytest.raises(ValueError):
            merge_datasets([a, b])


class TestGenerateSynthetic:
    def test_pure_function_of_config(self, synth_cfg):
        a = generate_synthetic(synth_cfg)
        b = generate_synthetic(synth_cfg)
        assert a.train.samples == b.train.samples
        assert a.test.samples == b.test.samples
        assert a.train_hard == b.train_hard

    def test_different_seed_differs(self, synth_cfg):
        from dataclasses import replace
        other = generate_synthetic(replace(synth_cfg, seed=synth_cfg.seed + 1))
        base = generate_synthetic(synth_cfg)
        assert other.train.samples != base.train.samples

    def test_easy_config_is_learnable(self):
        # With no hard samples, the package's own classifier is the oracle:
        # it must reach essentially perfect test accuracy.
        cfg = SynthConfig(num_classes=2, vocab_size=200, samples_per_class=150,
                          hardness_fraction=0.0, hard_flip_prob=0.0, seed=1)
        data = generate_synthetic(cfg)
        params, _ = train_main(
            data.train,
            TrainConfig(epochs=5, hidden_dim=16, seed=2,
                        features=FeaturizerConfig(hash_dim=2048)))
        acc = np.mean([predict(params, s)[0] == s.label for s in data.test.samples])
        assert acc >= 0.99

    def test_hard_samples_are_harder(self, synth_data, train_cfg):
        params, _ = train_main(synth_data.train, train_cfg)
        correct = np.array([predict(params, s)[0] == s.label
                            for s in synth_data.test.samples])
        hard = np.array(synth_data.test_hard)
        assert hard.any() and (~hard).any()
        assert correct[hard].mean() < correct[~hard].mean()

    def test_hardness_flags_align(self, synth_data):
        assert len(synth_data.train_hard) == len(synth_data.train)
        assert len(synth_data.test_hard) == len(synth_data.test)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SynthConfig(num_classes=1)
        with pytest.raises(ValueError):
            SynthConfig(hardness_fraction=1.5)
        with pytest.raises(ValueError):
            SynthConfig(vocab_size=10, num_classes=3, indicative_per_class=20)

    def test_hardness_sidecar_roundtrip(self, tmp_path, synth_data):
        p = tmp_path / "h.jsonl"
        save_hardness(synth_data.test, synth_data.test_hard, p)
        flags = load_hardness(p)
        for s, h in zip(synth_data.test.samples, synth_data.test_hard):
            assert flags[s.id] == h
