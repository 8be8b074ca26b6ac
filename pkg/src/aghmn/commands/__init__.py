"""Command implementations for the aghmn CLI"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Iterator, Optional, Sequence

import typer
from rich.console import Console
from rich.logging import RichHandler

from aghmn.config import RunConfig, load_run_config, parse_override
from aghmn.errors import AghmnError, ConfigError, LabelMismatchError

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def setup_logging(verbose: int) -> None:
    """Route library logging through rich on stderr; -V for INFO, -VV for DEBUG."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@contextmanager
def exit_on_error() -> Iterator[None]:
    """Translate library errors into ``Error: ...`` on stderr and an exit code."""
    try:
        yield
    except ConfigError as e:
        for problem in e.problems:
            typer.echo(f"Error: {problem}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    except LabelMismatchError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    except (AghmnError, OSError) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_RUNTIME)


def resolve_config(
    config: Optional[str],
    settings: Optional[Sequence[str]] = None,
    **flags,
) -> RunConfig:
    """Config file, then ``-s key=value`` settings, then explicit flags (None means unset)."""
    overrides = dict(parse_override(s) for s in settings or [])
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_run_config(config, overrides)


ConfigOpt = Annotated[Optional[Path], typer.Option("--config", "-c", help="Flat key = value config file")]
ProfileOpt = Annotated[Optional[str], typer.Option("--profile", help="Dataset profile: long (K=40) or short (K=10)")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="Random seed")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory")]
SetOpt = Annotated[Optional[list[str]], typer.Option("--set", "-s", help="Override a config key (key=value), repeatable")]
RepeatOpt = Annotated[Optional[int], typer.Option("--repeat", min=1, help="Train this many seeds (seed, seed+1, ...)")]
PrintConfigOpt = Annotated[bool, typer.Option("--print-config", help="Print the resolved config and exit")]


@dataclass
class GlobalOptions:
    """Run options given before the command name.

    A value given after the command name wins; root ``-s`` settings apply
    before the command's own.
    """

    config: Optional[Path] = None
    profile: Optional[str] = None
    seed: Optional[int] = None
    out: Optional[Path] = None
    settings: list[str] = field(default_factory=list)
    repeat: Optional[int] = None
    print_config: bool = False

    @classmethod
    def from_context(cls, ctx: Optional[typer.Context]) -> "GlobalOptions":
        obj = ctx.obj if ctx is not None else None
        return obj if isinstance(obj, cls) else cls()

    def resolve(
        self,
        config: Optional[Path] = None,
        settings: Optional[Sequence[str]] = None,
        profile: Optional[str] = None,
        seed: Optional[int] = None,
        out: Optional[Path] = None,
    ) -> RunConfig:
        return resolve_config(
            config or self.config,
            [*self.settings, *(settings or [])],
            profile=profile or self.profile,
            seed=seed if seed is not None else self.seed,
            out_dir=out or self.out,
        )
