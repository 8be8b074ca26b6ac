"""Training commands: train and sweep-k"""

import json
from typing import Annotated

import typer

from aghmn.commands import (
    ConfigOpt,
    GlobalOptions,
    OutOpt,
    PrintConfigOpt,
    ProfileOpt,
    RepeatOpt,
    SeedOpt,
    SetOpt,
    exit_on_error,
)
from aghmn.config import dump_run_config
from aghmn.errors import ConfigError
from aghmn.experiment import (
    CHECKPOINT_NAME,
    aggregate_reports,
    prepare_data,
    sweep_rows,
    train_run,
)
from aghmn.ui import format_aggregate_table, format_metrics_table, format_sweep_table, shorten_path

def train(
    ctx: typer.Context,
    config: ConfigOpt = None,
    profile: ProfileOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    settings: SetOpt = None,
    repeat: RepeatOpt = None,
    print_config: PrintConfigOpt = False,
):
    """
    Train a model, keep the best-validation parameters and report test metrics.

    Writes checkpoint.npz, train_log.jsonl and test_report.json to the output
    directory; with --repeat n, one run-<i> directory per seed plus aggregate.json.
    """
    opts = GlobalOptions.from_context(ctx)
    repeat = repeat or opts.repeat or 1
    with exit_on_error():
        cfg = opts.resolve(config, settings, profile, seed, out)
        if print_config or opts.print_config:
            typer.echo(dump_run_config(cfg), nl=False)
            return
        cfg.validate_paths()
        variant = cfg.to_model_config().variant

        if repeat == 1:
            outcome = train_run(cfg, prepare_data(cfg), cfg.seed, cfg.out_dir)
            format_metrics_table(outcome.report, variant, title="Test performance")
            typer.echo(f"✓ Best epoch {outcome.fit.best_epoch} "
                       f"(val mF1 {outcome.fit.best_val_mf1:.4f})")
            typer.echo(f"✓ Saved {shorten_path(str(outcome.out_dir / CHECKPOINT_NAME))}")
            return

        reports = []
        for i in range(repeat):
            run_seed = cfg.seed + i
            outcome = train_run(cfg, prepare_data(cfg, run_seed), run_seed, cfg.out_dir / f"run-{i}")
            reports.append(outcome.report)
            typer.echo(f"✓ Run {i} (seed {run_seed}): mF1 {outcome.report.macro_f1:.4f}")
        summary = aggregate_reports(reports)
        aggregate_path = cfg.out_dir / "aggregate.json"
        aggregate_path.write_text(json.dumps(summary, indent=2) + "\n")
        format_aggregate_table(summary, variant)
        typer.echo(f"✓ Saved {shorten_path(str(aggregate_path))}")


def _parse_ks(text: str) -> list[int]:
    try:
        return [int(k) for k in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError([f"k_values: expected integers, got '{text}'"]) from None


def sweep_k(
    ctx: typer.Context,
    k_values: Annotated[str, typer.Argument(help="Context-window sizes, e.g. '1,5,10,20,40'")],
    config: ConfigOpt = None,
    profile: ProfileOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    settings: SetOpt = None,
    print_config: PrintConfigOpt = False,
):
    """
    Train and test once per context-window size K and tabulate Acc/F1/mF1 vs K.

    Each K gets its own K-<k> run directory; the table is also written to sweep_k.json.
    """
    opts = GlobalOptions.from_context(ctx)
    with exit_on_error():
        ks = _parse_ks(k_values)
        if not ks or any(k <= 0 for k in ks) or len(set(ks)) != len(ks):
            raise ConfigError([f"k_values: must be distinct positive integers, got {ks}"])
        cfg = opts.resolve(config, settings, profile, seed, out)
        if print_config or opts.print_config:
            typer.echo(dump_run_config(cfg), nl=False)
            return
        cfg.validate_paths()
        rows = sweep_rows(cfg, ks, cfg.out_dir)
        sweep_path = cfg.out_dir / "sweep_k.json"
        sweep_path.write_text(json.dumps(rows, indent=2) + "\n")
        format_sweep_table(rows, cfg.to_model_config().variant)
        typer.echo(f"✓ Saved {shorten_path(str(sweep_path))}")
