"""Pytest configuration and shared fixtures for aghmn tests"""
import json
import tempfile
from pathlib import Path
from typing import Generator

import pytest

from aghmn.config import build_run_config
from aghmn.data import Conversation, Utterance, generate_synthetic, write_conversations
from aghmn.experiment import prepare_data, train_run


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test isolation"""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def two_turn_conversation() -> Conversation:
    """A two-utterance conversation between A and B"""
    return Conversation("c1", (
        Utterance("A", ("i", "am", "happy"), 0),
        Utterance("B", ("me", "too", "!"), 1),
    ))


@pytest.fixture
def synthetic_splits(temp_dir: Path) -> dict:
    """Small synthetic train/val/test corpora written to disk"""
    conversations, spec = generate_synthetic(16, len_range=(2, 5), n_classes=3, seed=3)
    paths = {}
    for name, part in (("train", conversations[:10]), ("val", conversations[10:13]), ("test", conversations[13:])):
        paths[name] = temp_dir / f"{name}.jsonl"
        write_conversations(part, paths[name], spec.labels)
    return {"paths": paths, "labels": spec.labels, "spec": spec, "dir": temp_dir}


@pytest.fixture
def tiny_settings(synthetic_splits: dict) -> dict:
    """Config values for a fast tiny run on the synthetic corpora"""
    paths = synthetic_splits["paths"]
    return {
        "d_w": 4, "d1": 3, "K": 2, "cnn_maps": 2, "max_epochs": 2, "patience": 2,
        "labels": synthetic_splits["labels"],
        "train_path": str(paths["train"]),
        "val_path": str(paths["val"]),
        "test_path": str(paths["test"]),
        "out_dir": str(synthetic_splits["dir"] / "run"),
    }


@pytest.fixture
def tiny_config_file(synthetic_splits: dict, tiny_settings: dict) -> Path:
    """tiny_settings as a flat key = value config file"""
    path = synthetic_splits["dir"] / "tiny.toml"
    path.write_text("".join(f"{k} = {json.dumps(v)}\n" for k, v in tiny_settings.items()))
    return path


@pytest.fixture
def trained_run(tiny_settings: dict):
    """A tiny model trained for two epochs, with its artifacts on disk"""
    cfg = build_run_config(tiny_settings)
    return train_run(cfg, prepare_data(cfg), cfg.seed, cfg.out_dir)
