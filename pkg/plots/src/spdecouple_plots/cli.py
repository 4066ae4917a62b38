"""Command-line figure rendering from the simulation CSV artifacts."""

from __future__ import annotations

import click

from .render import KINDS, PlotJob, render
from .schema import MissingFile, SchemaError


@click.command()
@click.option("--job", "kind", type=click.Choice(KINDS), required=True,
              help="Figure kind to render.")
@click.option("--in", "inputs", multiple=True, required=True,
              type=click.Path(), help="Input CSV (repeatable).")
@click.option("--out", "out", type=click.Path(), required=True,
              help="Output image file.")
@click.option("--lambda", "lambda_", type=float, default=None,
              help="Lyapunov bound for the survival envelope overlay.")
@click.option("--gamma", type=float, default=None,
              help="Fitted decay rate overlay for staged_decay.")
def main(kind, inputs, out, lambda_, gamma):
    """Render a figure from harness CSV artifacts."""
    try:
        path = render(PlotJob(kind, list(inputs), out, lambda_, gamma))
    except (SchemaError, MissingFile, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
