"""Tests for cli.py - command routing, exit codes and artifacts"""
import json
from unittest.mock import patch

import numpy as np
import pytest
import typer
from typer.testing import CliRunner

from aghmn.__version__ import __version__
from aghmn.cli import app, main_entry, version_callback
from aghmn.config import load_run_config
from aghmn.experiment import CHECKPOINT_NAME, LOG_NAME, REPORT_NAME
from aghmn.gradcheck import VariantResult, tiny_config
from aghmn.ui import shorten_path, show_welcome_panel

runner = CliRunner()


class TestVersionCallback:
    """Tests for version_callback function"""

    def test_version_callback_with_true(self):
        """Test version callback prints and exits when value is True"""
        with patch("aghmn.cli.typer.echo") as mock_echo:
            with pytest.raises(typer.Exit):
                version_callback(True)
            mock_echo.assert_called_once_with(f"aghmn version {__version__}")

    def test_version_callback_with_false(self):
        """Test version callback does nothing when value is False"""
        with patch("aghmn.cli.typer.echo") as mock_echo:
            assert version_callback(False) is None
            mock_echo.assert_not_called()


class TestMainApp:
    """Tests for main Typer app"""

    def test_help_lists_commands(self):
        """Test --help names every command"""
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("train", "eval", "export-attention", "sweep-k", "grad-check", "gen-synthetic", "stats"):
            assert command in result.output

    def test_version_flag(self):
        """Test --version shows version"""
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert f"aghmn version {__version__}" in result.output


class TestMainEntry:
    """Tests for main_entry function"""

    def test_no_args_shows_welcome(self):
        """Test main_entry with no args shows the panel then help"""
        with patch("sys.argv", ["aghmn"]):
            with patch("aghmn.cli.app") as mock_app, patch("aghmn.ui.show_welcome_panel") as mock_panel:
                main_entry()
                mock_panel.assert_called_once()
                mock_app.assert_called_once()

    def test_welcome_panel_text(self, capsys):
        """Test the panel names the model"""
        show_welcome_panel()
        assert "Attention Gated Hierarchical Memory Network" in capsys.readouterr().out

    def test_shorten_path_relative_to_cwd(self, temp_dir, monkeypatch):
        """Test paths under the working directory are shown relative"""
        root = temp_dir.resolve()
        monkeypatch.chdir(root)
        assert shorten_path(str(root / "runs" / "checkpoint.npz")) == "runs/checkpoint.npz"

    def test_subcommand_skips_welcome(self):
        """Test a subcommand goes straight to the app"""
        with patch("sys.argv", ["aghmn", "stats", "x.jsonl"]):
            with patch("aghmn.cli.app") as mock_app, patch("aghmn.ui.show_welcome_panel") as mock_panel:
                main_entry()
                mock_panel.assert_not_called()
                mock_app.assert_called_once()


class TestTrainCommand:
    """Tests for the train command"""

    def test_writes_artifacts(self, tiny_config_file, tiny_settings):
        """Test a tiny run succeeds and leaves checkpoint, log and report"""
        result = runner.invoke(app, ["train", "-c", str(tiny_config_file)])
        assert result.exit_code == 0, result.output
        assert "Best epoch" in result.output
        out = load_run_config(tiny_config_file).out_dir
        for name in (CHECKPOINT_NAME, LOG_NAME, REPORT_NAME):
            assert (out / name).exists()
        assert len((out / LOG_NAME).read_text().splitlines()) == tiny_settings["max_epochs"]

    def test_missing_train_path(self, temp_dir):
        """Test a config without train_path exits 2 naming the field"""
        path = temp_dir / "run.toml"
        path.write_text("K = 3\n")
        result = runner.invoke(app, ["train", "-c", str(path)])
        assert result.exit_code == 2
        assert "train_path" in result.output

    def test_invalid_override(self, tiny_config_file):
        """Test a bad -s value exits 2"""
        result = runner.invoke(app, ["train", "-c", str(tiny_config_file), "-s", "reader=lstm"])
        assert result.exit_code == 2
        assert "reader" in result.output

    def test_print_config_round_trip(self, tiny_config_file, temp_dir):
        """Test the printed config re-parses to the resolved config"""
        result = runner.invoke(app, ["train", "-c", str(tiny_config_file), "--seed", "5", "--print-config"])
        assert result.exit_code == 0
        echoed = temp_dir / "echo.toml"
        echoed.write_text(result.output)
        expected = load_run_config(tiny_config_file, {"seed": 5})
        assert load_run_config(echoed) == expected

    def test_repeat(self, tiny_config_file, temp_dir):
        """Test --repeat writes one run directory per seed and an aggregate"""
        out = temp_dir / "repeat"
        result = runner.invoke(app, ["train", "-c", str(tiny_config_file), "--repeat", "3", "-o", str(out)])
        assert result.exit_code == 0, result.output
        for i in range(3):
            assert (out / f"run-{i}" / CHECKPOINT_NAME).exists()
        summary = json.loads((out / "aggregate.json").read_text())
        assert summary["runs"] == 3
        assert set(summary["macro_f1"]) == {"mean", "std"}


class TestGlobalOptions:
    """Tests for run options given before the command name"""

    def _resolved(self, result, temp_dir):
        assert result.exit_code == 0, result.output
        echoed = temp_dir / "echo.toml"
        echoed.write_text(result.output)
        return load_run_config(echoed)

    def test_root_level_flags(self, tiny_config_file, temp_dir):
        """Test --config, --seed and --print-config work before the command"""
        result = runner.invoke(app, ["--config", str(tiny_config_file), "--seed", "5", "--print-config", "train"])
        assert self._resolved(result, temp_dir) == load_run_config(tiny_config_file, {"seed": 5})

    def test_command_value_wins(self, tiny_config_file, temp_dir):
        """Test a flag after the command overrides the root-level one"""
        result = runner.invoke(app, ["--seed", "5", "train", "-c", str(tiny_config_file), "--seed", "9", "--print-config"])
        assert self._resolved(result, temp_dir).seed == 9

    def test_settings_layer(self, tiny_config_file, temp_dir):
        """Test root -s settings apply first and command -s settings on top"""
        root_only = runner.invoke(app, ["-s", "K=3", "train", "-c", str(tiny_config_file), "--print-config"])
        both = runner.invoke(app, ["-s", "K=3", "train", "-c", str(tiny_config_file), "-s", "K=4", "--print-config"])
        assert self._resolved(root_only, temp_dir).K == 3
        assert self._resolved(both, temp_dir).K == 4

    def test_root_repeat(self, tiny_config_file, temp_dir):
        """Test --repeat before the command trains one run per seed"""
        out = temp_dir / "repeat"
        result = runner.invoke(app, ["--repeat", "2", "-o", str(out), "train", "-c", str(tiny_config_file)])
        assert result.exit_code == 0, result.output
        assert (out / "run-1" / CHECKPOINT_NAME).exists()
        assert json.loads((out / "aggregate.json").read_text())["runs"] == 2

    def test_sweep_k_print_config(self, tiny_config_file, temp_dir):
        """Test sweep-k honors the root-level config and --print-config"""
        result = runner.invoke(app, ["-c", str(tiny_config_file), "--print-config", "sweep-k", "1,2"])
        assert self._resolved(result, temp_dir) == load_run_config(tiny_config_file)


class TestEvalCommand:
    """Tests for the eval command"""

    def _checkpoint(self, trained_run):
        return str(trained_run.out_dir / CHECKPOINT_NAME)

    def test_table_is_stable(self, trained_run, synthetic_splits):
        """Test evaluating twice prints the same table"""
        args = ["eval", self._checkpoint(trained_run), str(synthetic_splits["paths"]["test"])]
        first, second = runner.invoke(app, args), runner.invoke(app, args)
        assert first.exit_code == 0, first.output
        assert first.output == second.output
        assert "mF1" in first.output

    def test_json_matches_report(self, trained_run, synthetic_splits, temp_dir):
        """Test --json and --out carry the run's test report"""
        out = temp_dir / "report.json"
        result = runner.invoke(app, [
            "eval", self._checkpoint(trained_run), str(synthetic_splits["paths"]["test"]), "--json", "-o", str(out),
        ])
        assert result.exit_code == 0
        data = json.loads(result.output)
        assert data == json.loads(out.read_text())
        assert data["macro_f1"] == trained_run.report.macro_f1

    def test_validation_reproduces_best_score(self, trained_run, synthetic_splits):
        """Test scoring the validation corpus gives the logged best validation mF1"""
        result = runner.invoke(app, [
            "eval", self._checkpoint(trained_run), str(synthetic_splits["paths"]["val"]), "--json",
        ])
        assert json.loads(result.output)["macro_f1"] == pytest.approx(trained_run.fit.best_val_mf1, abs=1e-12)

    def test_empty_corpus(self, trained_run, temp_dir):
        """Test an empty corpus exits 1"""
        empty = temp_dir / "empty.jsonl"
        empty.write_text("")
        result = runner.invoke(app, ["eval", self._checkpoint(trained_run), str(empty)])
        assert result.exit_code == 1
        assert "corpus is empty" in result.output

    def test_label_mismatch(self, trained_run, temp_dir):
        """Test a corpus with labels the model never saw exits 2"""
        corpus = temp_dir / "other.jsonl"
        corpus.write_text(json.dumps(
            {"conv_id": "x", "turn": 1, "speaker": "A", "text": "hi", "label": "furious"}
        ) + "\n")
        result = runner.invoke(app, ["eval", self._checkpoint(trained_run), str(corpus)])
        assert result.exit_code == 2
        assert "furious" in result.output

    def test_missing_checkpoint(self, synthetic_splits, temp_dir):
        """Test an absent checkpoint exits 1"""
        result = runner.invoke(app, ["eval", str(temp_dir / "none.npz"), str(synthetic_splits["paths"]["test"])])
        assert result.exit_code == 1

    def test_malformed_checkpoint(self, trained_run, synthetic_splits, temp_dir):
        """Test a checkpoint with invalid metadata exits 1 with an error line"""
        with np.load(self._checkpoint(trained_run)) as archive:
            arrays = {key: archive[key] for key in archive.files}
        meta = json.loads(str(arrays["__meta__"]))
        meta["config"]["K"] = -1
        arrays["__meta__"] = np.array(json.dumps(meta))
        bad = temp_dir / "bad.npz"
        with open(bad, "wb") as f:
            np.savez(f, **arrays)
        result = runner.invoke(app, ["eval", str(bad), str(synthetic_splits["paths"]["test"])])
        assert result.exit_code == 1
        assert "Error:" in result.output and "malformed" in result.output


class TestExportAttentionCommand:
    """Tests for the export-attention command"""

    def test_one_record_per_utterance(self, trained_run, synthetic_splits, temp_dir):
        """Test the trace file covers every test utterance"""
        out = temp_dir / "att.jsonl"
        corpus = synthetic_splits["paths"]["test"]
        result = runner.invoke(app, [
            "export-attention", str(trained_run.out_dir / CHECKPOINT_NAME), str(corpus), "-o", str(out),
        ])
        assert result.exit_code == 0, result.output
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(records) == trained_run.report.n
        assert f"Wrote {len(records)} trace records" in result.output
        assert set(records[0]) == {"conversation_id", "t", "speaker", "gold", "pred", "probs", "weights"}


class TestSweepKCommand:
    """Tests for the sweep-k command"""

    def test_single_value(self, tiny_config_file, temp_dir):
        """Test a one-value sweep writes one row"""
        out = temp_dir / "sweep"
        result = runner.invoke(app, ["sweep-k", "1", "-c", str(tiny_config_file), "-o", str(out)])
        assert result.exit_code == 0, result.output
        rows = json.loads((out / "sweep_k.json").read_text())
        assert [r["K"] for r in rows] == [1]

    @pytest.mark.parametrize("values", ["5,5", "0,3", "a,b"])
    def test_invalid_values(self, tiny_config_file, values):
        """Test duplicate, non-positive or non-integer K values exit 2"""
        result = runner.invoke(app, ["sweep-k", values, "-c", str(tiny_config_file)])
        assert result.exit_code == 2
        assert "k_values" in result.output


def _result(per_param):
    worst_param = max(per_param, key=per_param.get)
    return VariantResult(tiny_config(), per_param[worst_param], worst_param, per_param)


class TestGradCheckCommand:
    """Tests for the grad-check command with the check mocked"""

    def test_all_pass(self):
        """Test passing variants exit 0"""
        results = [_result({"embedding": 1e-8, "classifier.b_o": 2e-9})]
        with patch("aghmn.commands.gradcheck.run_grad_check", return_value=results) as mock_check:
            result = runner.invoke(app, ["grad-check", "--seeds", "2"])
        assert result.exit_code == 0
        mock_check.assert_called_once_with(seeds=2)
        assert "All 1 variants" in result.output

    def test_failure_lists_parameters(self):
        """Test a failing variant exits 1 and names its parameters"""
        results = [_result({"embedding": 1e-8, "classifier.b_o": 0.3})]
        with patch("aghmn.commands.gradcheck.run_grad_check", return_value=results):
            result = runner.invoke(app, ["grad-check"])
        assert result.exit_code == 1
        assert "Error: bigru/unif/agru: classifier.b_o" in result.output

    def test_json(self):
        """Test --json rows"""
        results = [_result({"embedding": 1e-8})]
        with patch("aghmn.commands.gradcheck.run_grad_check", return_value=results):
            result = runner.invoke(app, ["grad-check", "--json"])
        rows = json.loads(result.output)
        assert rows == [{
            "reader": "bigru", "fusion": "unif", "summarizer": "agru",
            "worst": 1e-8, "worst_param": "embedding", "passed": True,
        }]


class TestGenSyntheticCommand:
    """Tests for the gen-synthetic command"""

    def test_seeded_bytes(self, temp_dir):
        """Test a fixed seed writes identical files"""
        paths = [temp_dir / "a.jsonl", temp_dir / "b.jsonl"]
        for path in paths:
            assert runner.invoke(app, ["gen-synthetic", "--seed", "7", "-o", str(path)]).exit_code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        ids = {json.loads(line)["conv_id"] for line in paths[0].read_text().splitlines()}
        assert len(ids) == 120

    def test_sidecar(self, temp_dir):
        """Test the sidecar records the oracle ceiling that is echoed"""
        path = temp_dir / "syn.jsonl"
        result = runner.invoke(app, ["gen-synthetic", "--n", "20", "-o", str(path)])
        spec = json.loads((temp_dir / "syn.spec.json").read_text())
        assert f"{spec['oracle_ceiling']:.4f}" in result.output

    def test_splits(self, temp_dir):
        """Test --splits writes three corpora into a directory"""
        out = temp_dir / "corpus"
        result = runner.invoke(app, ["gen-synthetic", "--splits", "5:2:3", "-o", str(out)])
        assert result.exit_code == 0, result.output
        counts = {
            name: len({json.loads(line)["conv_id"] for line in (out / f"{name}.jsonl").read_text().splitlines()})
            for name in ("train", "val", "test")
        }
        assert counts == {"train": 5, "val": 2, "test": 3}
        assert (out / "spec.json").exists()

    @pytest.mark.parametrize("args", [["--splits", "5:2"], ["--min-len", "6", "--max-len", "3"]])
    def test_invalid(self, temp_dir, args):
        """Test malformed split counts and length ranges exit 2"""
        result = runner.invoke(app, ["gen-synthetic", "-o", str(temp_dir / "x"), *args])
        assert result.exit_code == 2


class TestStatsCommand:
    """Tests for the stats command"""

    def test_json(self, synthetic_splits):
        """Test per-corpus statistics as JSON"""
        path = synthetic_splits["paths"]["train"]
        labels = ",".join(synthetic_splits["labels"])
        result = runner.invoke(app, ["stats", str(path), "--labels", labels, "--json"])
        assert result.exit_code == 0, result.output
        stats = json.loads(result.output)[str(path)]
        assert stats["conversations"] == 10
        assert sum(stats["labels"].values()) == stats["utterances"]

    def test_table(self, synthetic_splits):
        """Test the table lists every label"""
        labels = synthetic_splits["labels"]
        result = runner.invoke(app, ["stats", str(synthetic_splits["paths"]["val"]), "--labels", ",".join(labels)])
        assert result.exit_code == 0
        assert all(label in result.output for label in labels)

    def test_profile_label_mismatch(self, synthetic_splits):
        """Test a corpus outside the profile's label set exits 2"""
        result = runner.invoke(app, ["stats", str(synthetic_splits["paths"]["val"]), "--profile", "short"])
        assert result.exit_code == 2
