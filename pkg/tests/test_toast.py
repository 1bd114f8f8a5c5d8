"""The three pipeline stages: cross-annotation, post-processing, multi-task
training, and their composition with ablation flags."""

from dataclasses import replace

import numpy as np
import pytest

from conftest import FEATS, make_separable
from selfcal.calibrators import Calibrator
from selfcal.corpus import CalibrationRecord
from selfcal.metrics import delta_conf
from selfcal.model import TrainConfig, get_flat_params
from selfcal.augment import TransformKind
from selfcal.toast import (
    AugmentedRecord,
    ToastConfig,
    build_augment_set,
    cross_annotate,
    downsample_balance,
    run_toast,
    split_annotate,
    train_multitask,
)


def _toast_cfg(seed=100, **kwargs) -> ToastConfig:
    train = TrainConfig(epochs=8, hidden_dim=16, seed=seed, features=FEATS)
    return ToastConfig(train=train, **kwargs)


def _records(n_pos, n_neg):
    recs = []
    for i in range(n_pos):
        recs.append(CalibrationRecord(f"p{i}", f"tok{i} words", None, 0, 1))
    for i in range(n_neg):
        recs.append(CalibrationRecord(f"n{i}", f"tok{i} other", None, 1, 0))
    return recs


class TestCrossAnnotate:
    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_output_size_equals_input_size(self, synth_data, k):
        result = cross_annotate(synth_data.train, _toast_cfg(k=k))
        assert len(result.records) == len(synth_data.train)

    def test_perfect_annotator_marks_everything_correct(self):
        d = make_separable(n_per_class=30)
        result = cross_annotate(d, ToastConfig(
            train=TrainConfig(epochs=5, hidden_dim=8, seed=4, features=FEATS)))
        assert all(r.correctness == 1 for r in result.records)

    def test_leakage_freedom(self, synth_data):
        cfg = _toast_cfg(k=3)
        result = cross_annotate(synth_data.train, cfg)
        # Records come out round by round; each record's id must sit in its
        # round's held-out fold and never in that round's training ids.
        offset = 0
        for rnd in result.rounds:
            heldout = set(rnd.heldout_ids)
            train_ids = set(rnd.train_ids)
            assert not heldout & train_ids
            chunk = result.records[offset:offset + len(rnd.heldout_ids)]
            offset += len(rnd.heldout_ids)
            for rec in chunk:
                assert rec.sample_id in heldout
                assert rec.sample_id not in train_ids
        assert offset == len(result.records)

    def test_rounds_use_distinct_seeds(self, synth_data):
        result = cross_annotate(synth_data.train, _toast_cfg(k=3))
        seeds = [r.seed for r in result.rounds]
        assert len(set(seeds)) == 3

    def test_mixed_correctness_on_hard_data(self, synth_data):
        result = cross_annotate(synth_data.train, _toast_cfg())
        kinds = {r.correctness for r in result.records}
        assert kinds == {0, 1}

    def test_split_annotate_is_a_tenth(self, synth_data):
        result = split_annotate(synth_data.train, _toast_cfg(no_cross_annotation=True))
        n = len(synth_data.train)
        assert abs(len(result.records) - n // 10) <= 1
        rnd = result.rounds[0]
        assert not set(rnd.heldout_ids) & set(rnd.train_ids)


class TestDownsampleBalance:
    def test_majority_cut_to_minority(self):
        out = downsample_balance(_records(90, 10), np.random.default_rng(0))
        pos = [r for r in out if r.correctness == 1]
        neg = [r for r in out if r.correctness == 0]
        assert len(pos) == len(neg) == 10

    def test_already_balanced_unchanged(self):
        recs = _records(10, 10)
        out = downsample_balance(recs, np.random.default_rng(0))
        assert out == recs

    def test_minority_untouched(self):
        recs = _records(50, 7)
        out = downsample_balance(recs, np.random.default_rng(1))
        kept_neg = [r.sample_id for r in out if r.correctness == 0]
        assert kept_neg == [r.sample_id for r in recs if r.correctness == 0]

    def test_no_duplicates_in_selection(self):
        out = downsample_balance(_records(100, 20), np.random.default_rng(2))
        ids = [r.sample_id for r in out]
        assert len(ids) == len(set(ids))

    def test_degenerate_classes_error(self):
        with pytest.raises(ValueError, match="degenerate"):
            downsample_balance(_records(30, 0), np.random.default_rng(0))
        with pytest.raises(ValueError, match="degenerate"):
            downsample_balance(_records(0, 30), np.random.default_rng(0))


class TestBuildAugmentSet:
    def test_one_variant_per_negative(self, lexicon):
        recs = _records(5, 10)
        out = build_augment_set(recs, lexicon, _toast_cfg(), np.random.default_rng(3))
        assert len(out) == 10

    def test_multiplicity(self, lexicon):
        recs = _records(0, 4)
        cfg = _toast_cfg(augment_per_negative=3)
        out = build_augment_set(recs, lexicon, cfg, np.random.default_rng(3))
        assert len(out) == 12

    def test_sources_are_negatives_only(self, lexicon):
        recs = _records(5, 5)
        neg_ids = {r.sample_id for r in recs if r.correctness == 0}
        out = build_augment_set(recs, lexicon, _toast_cfg(), np.random.default_rng(4))
        assert {a.sample_id for a in out} <= neg_ids

    def test_deterministic_given_seed(self, lexicon):
        recs = _records(2, 8)
        a = build_augment_set(recs, lexicon, _toast_cfg(), np.random.default_rng(5))
        b = build_augment_set(recs, lexicon, _toast_cfg(), np.random.default_rng(5))
        assert a == b


class TestTrainMultitask:
    def test_loss_rows_are_additive(self, synth_data, lexicon):
        cfg = _toast_cfg()
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        alpha = cfg.effective_alpha
        for row in artifacts.losses:
            total = row["l_main"] + row["l_calib"] + alpha * row["l_consistency"]
            assert abs(row["l_total"] - total) <= 1e-9

    def test_alpha_zero_matches_two_term_training(self, synth_data, lexicon):
        # With alpha=0, the consistency term exists but cannot move parameters,
        # so the trajectory must match a run without the term entirely.
        d = synth_data.train.subset(range(80))
        records = cross_annotate(d, _toast_cfg()).records
        balanced = downsample_balance(list(records), np.random.default_rng(0))
        daug = build_augment_set(balanced, lexicon, _toast_cfg(),
                                 np.random.default_rng(1))
        cfg_two_term = _toast_cfg(no_augment=True)
        cfg_alpha_zero = _toast_cfg(alpha=0.0)
        a, trace_a = train_multitask(d, balanced, [], cfg_two_term)
        b, trace_b = train_multitask(d, balanced, daug, cfg_alpha_zero)
        assert np.array_equal(get_flat_params(a), get_flat_params(b))
        assert [r["l_main"] for r in trace_a] == [r["l_main"] for r in trace_b]
        assert [r["l_calib"] for r in trace_a] == [r["l_calib"] for r in trace_b]
        assert [r["l_total"] for r in trace_a] == [r["l_total"] for r in trace_b]

    def test_identity_transform_gives_zero_consistency(self, synth_data):
        d = synth_data.train.subset(range(80))
        records = list(cross_annotate(d, _toast_cfg()).records)
        balanced = downsample_balance(records, np.random.default_rng(0))
        daug = [AugmentedRecord(r.sample_id, r.text_a, r.text_b, r.text_a,
                                r.predicted_label,
                                transform=TransformKind.SYNONYM_SUBSTITUTION)
                for r in balanced if r.correctness == 0]
        _, trace = train_multitask(d, balanced, daug, _toast_cfg())
        assert all(row["l_consistency"] == 0.0 for row in trace)

    def test_empty_calibration_set_rejected(self, synth_data):
        with pytest.raises(ValueError, match="calibration"):
            train_multitask(synth_data.train, [], [], _toast_cfg())

    def test_deterministic(self, synth_data, lexicon):
        cfg = _toast_cfg()
        a, _ = run_toast(synth_data.train, cfg, lexicon)
        b, _ = run_toast(synth_data.train, cfg, lexicon)
        assert np.array_equal(get_flat_params(a), get_flat_params(b))


class TestRunToast:
    def test_default_composition(self, synth_data, lexicon):
        cfg = _toast_cfg()
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        counts = artifacts.meta["counts"]
        assert counts["annotated"] == len(synth_data.train)
        neg = counts["annotated_negatives"]
        pos = counts["annotated_positives"]
        assert counts["dstar"] == 2 * min(neg, pos)
        dstar_neg = sum(1 for r in artifacts.dstar if r.correctness == 0)
        assert dstar_neg == counts["dstar"] // 2
        assert counts["daug"] == dstar_neg * cfg.augment_per_negative

    def test_no_cross_annotation_uses_a_tenth(self, synth_data, lexicon):
        cfg = _toast_cfg(no_cross_annotation=True)
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        n = len(synth_data.train)
        assert abs(artifacts.meta["counts"]["annotated"] - n // 10) <= 1
        assert len(artifacts.meta["rounds"]) == 1

    def test_no_downsample_keeps_everything(self, synth_data, lexicon):
        _, artifacts = run_toast(synth_data.train, _toast_cfg(no_downsample=True),
                                 lexicon)
        counts = artifacts.meta["counts"]
        assert counts["dstar"] == counts["annotated"]

    def test_no_augment_skips_consistency(self, synth_data, lexicon):
        _, artifacts = run_toast(synth_data.train, _toast_cfg(no_augment=True), lexicon)
        assert artifacts.meta["counts"]["daug"] == 0
        assert all(row["l_consistency"] == 0.0 for row in artifacts.losses)

    def test_no_alpha_decay_sets_alpha_to_one(self, synth_data, lexicon):
        cfg = _toast_cfg(no_alpha_decay=True)
        assert cfg.effective_alpha == 1.0
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        assert artifacts.meta["alpha_effective"] == 1.0

    def test_flags_recorded_in_meta(self, synth_data, lexicon):
        cfg = _toast_cfg(no_downsample=True, no_augment=True)
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        flags = artifacts.meta["flags"]
        assert flags["no_downsample"] and flags["no_augment"]
        assert not flags["no_cross_annotation"] and not flags["no_alpha_decay"]

    def test_confidence_separates_correct_from_wrong(self, synth_cfg, lexicon):
        # Across 3 seeds, P(true) for correct predictions exceeds wrong ones.
        from selfcal.corpus import generate_synthetic
        for seed in (0, 1, 2):
            data = generate_synthetic(replace(synth_cfg, seed=seed))
            params, _ = run_toast(data.train, _toast_cfg(seed=100 + seed), lexicon)
            log = Calibrator("toast", params).build_log(data.test, "id")
            pos = log.confidence[log.correct == 1]
            neg = log.confidence[log.correct == 0]
            assert delta_conf(pos, neg) > 0

    def test_artifacts_save(self, synth_data, lexicon, tmp_path):
        _, artifacts = run_toast(synth_data.train, _toast_cfg(), lexicon)
        artifacts.save(tmp_path / "bundle")
        for name in ("dstar.jsonl", "daug.jsonl", "losses.csv", "meta.json"):
            assert (tmp_path / "bundle" / name).exists()

    def test_annotated_records_keep_model_predictions(self, synth_data, lexicon):
        cfg = _toast_cfg()
        _, artifacts = run_toast(synth_data.train, cfg, lexicon)
        by_id = {s.id: s for s in synth_data.train.samples}
        for rec in artifacts.dstar:
            gold = by_id[rec.sample_id].label
            assert rec.correctness == int(rec.predicted_label == gold)
