"""Command line entry point.

Failures print one machine-readable line to stderr, `error: <type>: <message>`,
and exit with status 2.
"""

from __future__ import annotations

import sys

import click

from .errors import ExportError
from .exporter import DEFAULT_MODEL, export, manifest_path


@click.command()
@click.option("--squad", required=True, help="SQuAD 2.0 JSON file to embed.")
@click.option("--out", required=True, help="Output BEMB path.")
@click.option("--model", default=DEFAULT_MODEL, show_default=True,
              help='Checkpoint name, or "untrained:<layers>x<hidden>" for a '
                   "seeded random encoder (no download).")
@click.option("--max-seq-len", type=int, default=384, show_default=True)
@click.option("--batch-size", type=int, default=8, show_default=True)
def main(squad, out, model, max_seq_len, batch_size) -> None:
    """Embed question+context pairs with a frozen encoder into a BEMB file."""
    try:
        manifest = export(squad, out, model_id=model, max_seq_len=max_seq_len,
                          batch_size=batch_size)
    except ExportError as e:
        click.echo(f"error: {type(e).__name__}: {e}", err=True)
        sys.exit(2)
    click.echo(f"wrote {len(manifest.qids)} records (H={manifest.h}) to {out}")
    click.echo(f"manifest: {manifest_path(out)}")


if __name__ == "__main__":
    main()
