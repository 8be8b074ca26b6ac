"""Tests for experiment.py - data preparation, runs, aggregation and traces"""
import json

import numpy as np
import pytest

from aghmn.checkpoint import load_checkpoint
from aghmn.config import build_run_config
from aghmn.data import UNK_TOKEN, generate_synthetic
from aghmn.errors import ContractError
from aghmn.experiment import (
    CHECKPOINT_NAME,
    LOG_NAME,
    REPORT_NAME,
    aggregate_reports,
    corpus_stats,
    prepare_data,
    sweep_rows,
    trace_records,
    write_traces,
)
from aghmn.train import compute_metrics, evaluate


class TestPrepareData:
    """Tests for prepare_data"""

    def test_explicit_splits(self, tiny_settings):
        """Test configured corpora load as given, vocabulary from training only"""
        splits = prepare_data(build_run_config(tiny_settings))
        assert (len(splits.train), len(splits.val), len(splits.test)) == (10, 3, 3)
        assert splits.vocab.words[0] == UNK_TOKEN
        train_words = {w for c in splits.train for u in c.utterances for w in u.tokens}
        assert set(splits.vocab.words[1:]) == train_words
        assert splits.embeddings.matrix.shape == (len(splits.vocab), 4)

    def test_carves_validation(self, tiny_settings):
        """Test a missing val_path holds out a seeded share of training"""
        settings = {**tiny_settings, "val_path": None, "test_path": None, "val_fraction": 0.2}
        cfg = build_run_config(settings)
        splits = prepare_data(cfg)
        assert (len(splits.train), len(splits.val)) == (8, 2) and splits.test is None
        assert [c.id for c in prepare_data(cfg).val] == [c.id for c in splits.val]


class TestTrainRun:
    """Tests for train_run artifacts"""

    def test_artifacts(self, trained_run):
        """Test checkpoint, one log line per epoch and the test report"""
        out = trained_run.out_dir
        assert (out / CHECKPOINT_NAME).exists()
        records = [json.loads(line) for line in (out / LOG_NAME).read_text().splitlines()]
        assert len(records) == len(trained_run.fit.log) == 2
        report = json.loads((out / REPORT_NAME).read_text())
        assert report["n"] == trained_run.report.n > 0
        assert report["macro_f1"] == trained_run.report.macro_f1

    def test_checkpoint_reproduces_report(self, trained_run, tiny_settings):
        """Test the saved model scores the test corpus exactly as reported"""
        model, meta = load_checkpoint(trained_run.out_dir / CHECKPOINT_NAME)
        splits = prepare_data(build_run_config(tiny_settings))
        assert evaluate(model, splits.test) == trained_run.report
        assert meta["extra"]["best_epoch"] == trained_run.fit.best_epoch


class TestAggregateReports:
    """Tests for aggregate_reports"""

    def test_mean_and_std(self):
        """Test aggregates over two runs"""
        labels = ["a", "b"]
        first = compute_metrics([0, 1, 1, 0], [0, 1, 1, 0], labels)
        second = compute_metrics([0, 1, 1, 0], [0, 0, 0, 0], labels)
        summary = aggregate_reports([first, second])
        assert summary["runs"] == 2 and summary["labels"] == labels
        assert summary["accuracy"]["mean"] == pytest.approx(0.75)
        assert summary["accuracy"]["std"] == pytest.approx(0.25)
        np.testing.assert_allclose(summary["per_class_recall"]["mean"], [1.0, 0.5])

    def test_empty(self):
        """Test there must be at least one report"""
        with pytest.raises(ContractError):
            aggregate_reports([])


class TestSweepRows:
    """Tests for sweep_rows validation"""

    @pytest.mark.parametrize("ks", [[], [0, 1], [2, 2]])
    def test_rejects_bad_values(self, tiny_settings, temp_dir, ks):
        """Test K lists must be nonempty, positive and distinct"""
        with pytest.raises(ContractError):
            sweep_rows(build_run_config(tiny_settings), ks, temp_dir)

    def test_one_row_per_k(self, tiny_settings, temp_dir):
        """Test a two-value sweep gives two rows and two run directories"""
        cfg = build_run_config({**tiny_settings, "max_epochs": 1})
        rows = sweep_rows(cfg, [1, 3], temp_dir / "sweep")
        assert [r["K"] for r in rows] == [1, 3]
        assert set(rows[0]) == {"K", "accuracy", "weighted_f1", "macro_f1"}
        assert (temp_dir / "sweep" / "K-3" / CHECKPOINT_NAME).exists()


class TestTraces:
    """Tests for trace_records and write_traces"""

    def test_one_record_per_utterance(self, trained_run, temp_dir):
        """Test trace counts, weight lengths and normalization"""
        model = trained_run.model
        convs, _ = generate_synthetic(4, len_range=(2, 5), n_classes=3, seed=9)
        count = write_traces(temp_dir / "att.jsonl", trace_records(model, convs))
        records = [json.loads(line) for line in (temp_dir / "att.jsonl").read_text().splitlines()]
        assert count == len(records) == sum(len(c) for c in convs)
        for record in records:
            assert len(record["weights"]) == min(record["t"] - 1, model.cfg.K)
            if record["weights"]:
                assert sum(record["weights"]) == pytest.approx(1.0)
            assert sum(record["probs"]) == pytest.approx(1.0)
            assert record["gold"] in model.labels and record["pred"] in model.labels

    def test_first_step_has_no_weights(self, trained_run):
        """Test the opening utterance attends over nothing"""
        convs, _ = generate_synthetic(1, len_range=(2, 2), n_classes=3, seed=1)
        first = next(iter(trace_records(trained_run.model, convs)))
        assert first["t"] == 1 and first["weights"] == []


class TestCorpusStats:
    """Tests for corpus_stats"""

    def test_counts(self, two_turn_conversation):
        """Test counts and label distribution by hand"""
        stats = corpus_stats([two_turn_conversation], ["happy", "sad", "angry"])
        assert stats == {
            "conversations": 1,
            "utterances": 2,
            "mean_length": 2.0,
            "max_length": 2,
            "labels": {"happy": 1, "sad": 1, "angry": 0},
        }

    def test_empty(self):
        """Test an empty corpus summarizes to zeros"""
        assert corpus_stats([], ["a"])["mean_length"] == 0.0
