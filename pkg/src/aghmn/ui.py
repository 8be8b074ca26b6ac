"""Rich UI formatting helpers for the aghmn CLI"""

from pathlib import Path
from typing import Optional, Sequence

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from aghmn.train import MetricsReport


def shorten_path(path: str) -> str:
    """
    Shorten a file path for display.

    - Shows relative path if in current directory
    - Replaces home directory with ~
    - Returns full path otherwise
    """
    path_obj = Path(path).absolute()

    try:
        return str(path_obj.relative_to(Path.cwd()))
    except ValueError:
        pass

    try:
        return f"~/{path_obj.relative_to(Path.home())}"
    except ValueError:
        pass

    return str(path_obj)


def _pct(value: float) -> str:
    return f"{100 * value:.1f}"


def _console(columns: int) -> Console:
    # wide enough that per-class columns never wrap, so output is stable
    return Console(width=max(100, 10 * columns))


def format_metrics_table(report: MetricsReport, model_name: str, title: Optional[str] = None) -> None:
    """
    Display a MetricsReport as one row: per-class Acc/F1 pairs, then the
    weighted averages and the macro F1.

    Args:
        report: Metrics to show (values rendered as percentages)
        model_name: Row label, e.g. "BiF-AGRU"
        title: Table title
    """
    table = Table(
        title=f"[bold cyan]{title or 'Performance'}[/bold cyan]",
        box=box.ROUNDED,
        show_header=True,
        header_style="bold cyan",
        border_style="cyan",
    )
    table.add_column("Model", style="bold green", no_wrap=True)
    for label in report.labels:
        table.add_column(f"{label}\nAcc", justify="right")
        table.add_column(f"{label}\nF1", justify="right")
    table.add_column("Avg\nAcc", justify="right", style="bold")
    table.add_column("Avg\nF1", justify="right", style="bold")
    table.add_column("mF1", justify="right", style="bold magenta")

    cells = [model_name]
    for acc, f1 in zip(report.recall, report.f1):
        cells += [_pct(acc), _pct(f1)]
    cells += [_pct(report.accuracy), _pct(report.weighted_f1), _pct(report.macro_f1)]
    table.add_row(*cells)

    console = _console(len(cells))
    console.print(table)
    support = ", ".join(f"{label}={n}" for label, n in zip(report.labels, report.support))
    console.print(f"\n[dim cyan]{report.n} utterances ({support})[/dim cyan]")


def format_aggregate_table(summary: dict, model_name: str) -> None:
    """Display mean +/- std of the aggregate metrics over repeated runs."""
    table = Table(
        title=f"[bold green]{model_name} over {summary['runs']} run(s)[/bold green]",
        box=box.ROUNDED,
        header_style="bold cyan",
        border_style="green",
    )
    table.add_column("Metric", style="bold")
    table.add_column("Mean", justify="right")
    table.add_column("Std", justify="right", style="dim")
    for key, name in (("accuracy", "Avg Acc"), ("weighted_f1", "Avg F1"), ("macro_f1", "mF1")):
        table.add_row(name, _pct(summary[key]["mean"]), _pct(summary[key]["std"]))
    _console(3).print(table)


def format_sweep_table(rows: Sequence[dict], model_name: str) -> None:
    """Display test metrics against context-window size K."""
    table = Table(
        title=f"[bold cyan]{model_name}: metrics vs K[/bold cyan]",
        box=box.ROUNDED,
        header_style="bold cyan",
        border_style="cyan",
    )
    table.add_column("K", justify="right", style="bold green")
    table.add_column("Acc", justify="right")
    table.add_column("F1", justify="right")
    table.add_column("mF1", justify="right", style="magenta")
    for row in rows:
        table.add_row(str(row["K"]), _pct(row["accuracy"]), _pct(row["weighted_f1"]), _pct(row["macro_f1"]))
    _console(4).print(table)


def format_grad_check_table(results: Sequence, tolerance: float) -> None:
    """Display the worst relative gradient error per variant."""
    table = Table(
        title="[bold cyan]Gradient check[/bold cyan]",
        box=box.ROUNDED,
        header_style="bold cyan",
        border_style="cyan",
    )
    table.add_column("Reader", style="blue")
    table.add_column("Variant", style="bold green", no_wrap=True)
    table.add_column("Worst rel. err", justify="right")
    table.add_column("Parameter", style="dim")
    table.add_column("Status", justify="center")
    for r in results:
        status = "[green]pass[/green]" if r.worst < tolerance else "[bold red]FAIL[/bold red]"
        table.add_row(r.cfg.reader, r.cfg.variant.replace(" (cnn)", ""), f"{r.worst:.2e}", r.worst_param, status)
    _console(5).print(table)


def format_stats_table(stats: dict[str, dict]) -> None:
    """Display corpus statistics, one row per corpus file."""
    labels = list(next(iter(stats.values()))["labels"]) if stats else []
    table = Table(
        title="[bold cyan]Corpus statistics[/bold cyan]",
        box=box.ROUNDED,
        header_style="bold cyan",
        border_style="cyan",
    )
    table.add_column("Corpus", style="bold green", no_wrap=True)
    table.add_column("Conv", justify="right")
    table.add_column("Utt", justify="right")
    table.add_column("Mean len", justify="right")
    for label in labels:
        table.add_column(label, justify="right", style="dim")
    for name, s in stats.items():
        table.add_row(
            name, str(s["conversations"]), str(s["utterances"]), f"{s['mean_length']:.1f}",
            *[str(s["labels"][label]) for label in labels],
        )
    _console(4 + len(labels)).print(table)


def show_welcome_panel() -> None:
    """Display styled welcome panel for main help screen."""
    console = Console()

    welcome_text = (
        "[bold cyan]AGHMN[/bold cyan] - Attention Gated Hierarchical Memory Network\n"
        "[dim]Real-time emotion recognition in conversations[/dim]"
    )

    panel = Panel(
        welcome_text,
        border_style="cyan",
        box=box.ROUNDED,
        padding=(1, 2)
    )

    console.print(panel)
    console.print()
