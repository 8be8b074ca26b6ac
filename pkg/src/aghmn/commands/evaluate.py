"""Evaluation commands: eval and export-attention"""

from pathlib import Path
from typing import Annotated, Optional

import typer

from aghmn.checkpoint import load_checkpoint
from aghmn.commands import exit_on_error
from aghmn.data import load_conversations
from aghmn.errors import ContractError
from aghmn.experiment import trace_records, write_traces
from aghmn.train import evaluate
from aghmn.ui import format_metrics_table, shorten_path

CheckpointArg = Annotated[Path, typer.Argument(help="checkpoint.npz written by train")]
CorpusArg = Annotated[Path, typer.Argument(help="JSONL corpus to run the model on")]
WorkersOpt = Annotated[int, typer.Option("--workers", min=1, help="Conversations evaluated in parallel")]


def _load(checkpoint: Path, corpus: Path):
    model, _ = load_checkpoint(checkpoint)
    conversations = load_conversations(corpus, model.labels)
    if not conversations:
        raise ContractError(f"{corpus}: corpus is empty")
    return model, conversations


def evaluate_checkpoint(
    checkpoint: CheckpointArg,
    corpus: CorpusArg,
    json_output: Annotated[bool, typer.Option("--json", help="Output as JSON")] = False,
    out: Annotated[Optional[Path], typer.Option("--out", "-o", help="Also write the report as JSON here")] = None,
    workers: WorkersOpt = 1,
):
    """
    Score a checkpoint on a corpus: per-class Acc/F1, weighted averages and mF1.
    """
    with exit_on_error():
        model, conversations = _load(checkpoint, corpus)
        report = evaluate(model, conversations, workers)
        if out is not None:
            out.write_text(report.model_dump_json(indent=2) + "\n")

    if json_output:
        typer.echo(report.model_dump_json(indent=2))
        return
    format_metrics_table(report, model.cfg.variant, title=f"Performance on {shorten_path(str(corpus))}")


def export_attention(
    checkpoint: CheckpointArg,
    corpus: CorpusArg,
    out: Annotated[Path, typer.Option("--out", "-o", help="Trace file (JSONL)")] = Path("attention.jsonl"),
    workers: WorkersOpt = 1,
):
    """
    Export one attention-trace record per utterance: speaker, gold, prediction,
    class probabilities and the attention weights over the memory bank.
    """
    with exit_on_error():
        model, conversations = _load(checkpoint, corpus)
        count = write_traces(out, trace_records(model, conversations, workers))
    typer.echo(f"✓ Wrote {count} trace records to {shorten_path(str(out))}")
