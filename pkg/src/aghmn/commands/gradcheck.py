"""Gradient check command"""

import json
from typing import Annotated

import typer

from aghmn.gradcheck import TOLERANCE, run_grad_check
from aghmn.ui import format_grad_check_table


def grad_check(
    seeds: Annotated[int, typer.Option("--seeds", min=1, help="Random seeds per variant")] = 1,
    json_output: Annotated[bool, typer.Option("--json", help="Output as JSON")] = False,
):
    """
    Compare backpropagated gradients with central differences for every
    reader x fusion x summarizer combination on a tiny model.
    """
    results = run_grad_check(seeds=seeds)

    if json_output:
        rows = [
            {
                "reader": r.cfg.reader,
                "fusion": r.cfg.fusion,
                "summarizer": r.cfg.summarizer,
                "worst": r.worst,
                "worst_param": r.worst_param,
                "passed": r.passed,
            }
            for r in results
        ]
        typer.echo(json.dumps(rows, indent=2))
    else:
        format_grad_check_table(results, TOLERANCE)

    failed = [r for r in results if not r.passed]
    if failed:
        for r in failed:
            typer.echo(f"Error: {r.cfg.reader}/{r.cfg.fusion}/{r.cfg.summarizer}: {', '.join(r.failures)}", err=True)
        raise typer.Exit(1)
    if not json_output:
        typer.echo(f"✓ All {len(results)} variants within {TOLERANCE:g}")
