"""AGHMN CLI - train, evaluate and inspect attention gated hierarchical memory networks"""

import sys
from typing import Annotated

import typer

from aghmn.__version__ import __version__
from aghmn.commands import (
    ConfigOpt,
    GlobalOptions,
    OutOpt,
    PrintConfigOpt,
    ProfileOpt,
    RepeatOpt,
    SeedOpt,
    SetOpt,
    corpus,
    evaluate,
    gradcheck,
    setup_logging,
    train,
)


def version_callback(value: bool):
    """Print version and exit."""
    if value:
        typer.echo(f"aghmn version {__version__}")
        raise typer.Exit()


# Create main app
app = typer.Typer(
    help="AGHMN - real-time emotion recognition in conversations",
    add_completion=False,
    no_args_is_help=True,
)

# Register commands
app.command("train")(train.train)
app.command("eval")(evaluate.evaluate_checkpoint)
app.command("export-attention")(evaluate.export_attention)
app.command("sweep-k")(train.sweep_k)
app.command("grad-check")(gradcheck.grad_check)
app.command("gen-synthetic")(corpus.gen_synthetic)
app.command("stats")(corpus.stats)


@app.callback()
def main(
    ctx: typer.Context,
    version: Annotated[bool, typer.Option(
        "--version",
        "-v",
        help="Show version and exit",
        callback=version_callback,
        is_eager=True,
    )] = False,
    verbose: Annotated[int, typer.Option(
        "--verbose",
        "-V",
        count=True,
        help="Log progress to stderr (-VV for debug output)",
    )] = 0,
    config: ConfigOpt = None,
    profile: ProfileOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    settings: SetOpt = None,
    repeat: RepeatOpt = None,
    print_config: PrintConfigOpt = False,
):
    """AGHMN - real-time emotion recognition in conversations

    Run options given here apply to train and sweep-k.
    """
    setup_logging(verbose)
    ctx.obj = GlobalOptions(
        config=config,
        profile=profile,
        seed=seed,
        out=out,
        settings=list(settings or []),
        repeat=repeat,
        print_config=print_config,
    )


def main_entry():
    """
    Main entry point; shows the welcome panel above the top-level help.
    """
    if len(sys.argv) <= 1 or sys.argv[1] in ["--help", "-h", "help"]:
        from aghmn.ui import show_welcome_panel
        show_welcome_panel()
        if len(sys.argv) > 1 and sys.argv[1] in ["-h", "help"]:
            sys.argv[1] = "--help"
    app()


if __name__ == "__main__":
    main_entry()
