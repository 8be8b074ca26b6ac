"""Experiment plumbing shared by the commands: data preparation, runs, traces, summaries"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from aghmn.checkpoint import save_checkpoint
from aghmn.config import RunConfig
from aghmn.data import (
    Conversation,
    EmbeddingTable,
    Vocabulary,
    build_vocab,
    load_conversations,
    load_embeddings,
    split_conversations,
)
from aghmn.errors import ContractError
from aghmn.model import Model, init_params
from aghmn.train import FitResult, MetricsReport, evaluate, fit, predict

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.npz"
LOG_NAME = "train_log.jsonl"
REPORT_NAME = "test_report.json"


@dataclass
class Splits:
    train: list[Conversation]
    val: list[Conversation]
    test: Optional[list[Conversation]]
    vocab: Vocabulary
    embeddings: EmbeddingTable


@dataclass
class RunOutcome:
    model: Model
    fit: FitResult
    report: MetricsReport
    out_dir: Path


def prepare_data(cfg: RunConfig, seed: Optional[int] = None) -> Splits:
    """Load corpora, carve a validation split when none is given, build vocabulary and embeddings."""
    seed = cfg.seed if seed is None else seed
    train = load_conversations(cfg.train_path, cfg.labels)
    if cfg.val_path is not None:
        val = load_conversations(cfg.val_path, cfg.labels)
    else:
        train, val = split_conversations(train, cfg.val_fraction, seed)
    test = load_conversations(cfg.test_path, cfg.labels) if cfg.test_path is not None else None
    if not train or not val:
        raise ContractError("training and validation corpora must be nonempty")
    vocab = build_vocab(train, cfg.min_freq)
    embeddings = load_embeddings(cfg.embeddings_path, vocab, cfg.d_w, seed)
    return Splits(train, val, test, vocab, embeddings)


def train_run(cfg: RunConfig, splits: Splits, seed: int, out_dir: Path) -> RunOutcome:
    """Train one model and write its checkpoint, training log and test report to ``out_dir``.

    The report covers the test corpus, or the validation corpus when no test
    corpus is configured.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / LOG_NAME
    log_path.unlink(missing_ok=True)

    model_cfg = cfg.to_model_config()
    params = init_params(model_cfg, len(splits.vocab), seed, embeddings=splits.embeddings.matrix)
    model = Model(model_cfg, params, splits.vocab, list(cfg.labels))
    result = fit(model, splits.train, splits.val, cfg.to_train_config(seed), log_path=log_path)

    save_checkpoint(out_dir / CHECKPOINT_NAME, model, extra={
        "seed": seed, "best_epoch": result.best_epoch, "best_val_mf1": result.best_val_mf1,
    })
    report = evaluate(model, splits.test if splits.test else splits.val, cfg.workers)
    (out_dir / REPORT_NAME).write_text(report.model_dump_json(indent=2) + "\n")
    logger.info("%s seed %d: test acc %.4f  F1 %.4f  mF1 %.4f",
                model_cfg.variant, seed, report.accuracy, report.weighted_f1, report.macro_f1)
    return RunOutcome(model, result, report, out_dir)


AGGREGATES = ("accuracy", "weighted_f1", "macro_f1")


def aggregate_reports(reports: Sequence[MetricsReport]) -> dict:
    """Mean and standard deviation of every aggregate and per-class metric across runs."""
    if not reports:
        raise ContractError("nothing to aggregate")
    summary: dict = {"runs": len(reports), "labels": reports[0].labels}
    for key in AGGREGATES:
        values = np.array([getattr(r, key) for r in reports])
        summary[key] = {"mean": float(values.mean()), "std": float(values.std())}
    for key in ("recall", "f1"):
        values = np.array([getattr(r, key) for r in reports])
        summary[f"per_class_{key}"] = {"mean": values.mean(axis=0).tolist(), "std": values.std(axis=0).tolist()}
    return summary


def sweep_rows(cfg: RunConfig, ks: Sequence[int], out_dir: Path) -> list[dict]:
    """Train and evaluate once per context-window size.

    Raises:
        ContractError: Non-positive or repeated K values
    """
    if not ks:
        raise ContractError("K list is empty")
    if any(k <= 0 for k in ks):
        raise ContractError(f"K values must be positive, got {list(ks)}")
    if len(set(ks)) != len(ks):
        raise ContractError(f"K values must be distinct, got {list(ks)}")
    splits = prepare_data(cfg)
    rows = []
    for k in ks:
        run_cfg = cfg.model_copy(update={"K": k})
        outcome = train_run(run_cfg, splits, cfg.seed, Path(out_dir) / f"K-{k}")
        rows.append({
            "K": k,
            "accuracy": outcome.report.accuracy,
            "weighted_f1": outcome.report.weighted_f1,
            "macro_f1": outcome.report.macro_f1,
        })
    return rows


def trace_records(model: Model, conversations: Sequence[Conversation], workers: int = 1) -> Iterable[dict]:
    """One attention-trace record per utterance step."""
    labels = model.labels
    for conv, traces in zip(conversations, predict(model, conversations, workers)):
        for tr in traces:
            yield {
                "conversation_id": conv.id,
                "t": tr.t,
                "speaker": tr.speaker,
                "gold": labels[tr.gold],
                "pred": labels[tr.pred],
                "probs": tr.probs.tolist(),
                "weights": tr.weights,
            }


def write_traces(path: Path, records: Iterable[dict]) -> int:
    """Write records as JSONL; returns how many were written."""
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
            count += 1
    return count


def corpus_stats(conversations: Sequence[Conversation], labels: Sequence[str]) -> dict:
    """Conversation/utterance counts, mean length and label distribution."""
    lengths = [len(c) for c in conversations]
    counts = np.zeros(len(labels), dtype=np.int64)
    for conv in conversations:
        for utt in conv.utterances:
            counts[utt.label] += 1
    return {
        "conversations": len(conversations),
        "utterances": int(sum(lengths)),
        "mean_length": float(np.mean(lengths)) if lengths else 0.0,
        "max_length": max(lengths, default=0),
        "labels": dict(zip(labels, counts.tolist())),
    }
