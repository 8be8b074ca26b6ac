"""Corpus commands: gen-synthetic and stats"""

import json
from pathlib import Path
from typing import Annotated, Optional

import typer

from aghmn.commands import exit_on_error
from aghmn.config import PROFILES
from aghmn.data import generate_synthetic, load_conversations, write_conversations
from aghmn.errors import ConfigError
from aghmn.experiment import corpus_stats
from aghmn.ui import format_stats_table, shorten_path

SPLIT_NAMES = ("train", "val", "test")


def _parse_splits(text: str) -> list[int]:
    parts = text.split(":")
    try:
        counts = [int(p) for p in parts]
    except ValueError:
        counts = []
    if len(counts) != 3 or any(c <= 0 for c in counts):
        raise ConfigError([f"splits: expected three positive counts a:b:c, got '{text}'"])
    return counts


def gen_synthetic(
    n: Annotated[int, typer.Option("--n", min=1, help="Number of conversations")] = 120,
    min_len: Annotated[int, typer.Option("--min-len", min=1, help="Shortest conversation")] = 4,
    max_len: Annotated[int, typer.Option("--max-len", min=1, help="Longest conversation")] = 12,
    classes: Annotated[int, typer.Option("--classes", min=2, help="Number of emotion classes")] = 4,
    carry: Annotated[float, typer.Option("--carry", min=0.0, max=1.0, help="Probability an utterance repeats its speaker's last label")] = 0.3,
    seed: Annotated[int, typer.Option("--seed", help="Random seed")] = 7,
    out: Annotated[Path, typer.Option("--out", "-o", help="Corpus file, or directory with --splits")] = Path("synthetic.jsonl"),
    splits: Annotated[Optional[str], typer.Option("--splits", help="Write train/val/test corpora of a:b:c conversations")] = None,
):
    """
    Generate a two-speaker corpus where some labels can only be recovered from
    the speaker's history, plus a sidecar record describing the draw.
    """
    with exit_on_error():
        counts = _parse_splits(splits) if splits else None
        if min_len > max_len:
            raise ConfigError([f"max_len: must be >= min_len ({min_len}), got {max_len}"])
        total = sum(counts) if counts else n
        conversations, spec = generate_synthetic(
            total, len_range=(min_len, max_len), n_classes=classes, seed=seed, carry_prob=carry,
        )

        if counts:
            out.mkdir(parents=True, exist_ok=True)
            start = 0
            for name, count in zip(SPLIT_NAMES, counts):
                write_conversations(conversations[start:start + count], out / f"{name}.jsonl", spec.labels)
                start += count
            spec_path = out / "spec.json"
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            write_conversations(conversations, out, spec.labels)
            spec_path = out.with_suffix(".spec.json")
        spec_path.write_text(spec.to_json() + "\n")

    typer.echo(f"✓ Generated {total} conversations ({spec.n_utterances} utterances, "
               f"{spec.n_carried} context-carried)")
    typer.echo(f"✓ Keyword oracle ceiling {spec.oracle_ceiling:.4f}")
    typer.echo(f"✓ Saved {shorten_path(str(out))}")


def stats(
    corpora: Annotated[list[Path], typer.Argument(help="JSONL corpus files")],
    labels: Annotated[Optional[str], typer.Option("--labels", help="Comma-separated label list (overrides --profile)")] = None,
    profile: Annotated[str, typer.Option("--profile", help="Label set of a dataset profile: long or short")] = "long",
    json_output: Annotated[bool, typer.Option("--json", help="Output as JSON")] = False,
):
    """
    Summarize corpora: conversations, utterances, mean length and label counts.
    """
    with exit_on_error():
        if labels:
            label_list = [label.strip() for label in labels.split(",") if label.strip()]
        elif profile in PROFILES:
            label_list = list(PROFILES[profile]["labels"])
        else:
            raise ConfigError([f"profile: expected one of {sorted(PROFILES)}, got '{profile}'"])
        summary = {
            str(path): corpus_stats(load_conversations(path, label_list), label_list)
            for path in corpora
        }

    if json_output:
        typer.echo(json.dumps(summary, indent=2))
        return
    format_stats_table({shorten_path(name): s for name, s in summary.items()})
