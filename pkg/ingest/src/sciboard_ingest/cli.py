"""Command-line front end: PDFs in, bundle files out."""

from __future__ import annotations

from pathlib import Path

import click

from .document import extract_document, validate_bundle, write_bundle
from .errors import IngestError


def run_ingest(pdfs: list[str], out: str) -> list[Path]:
    """Extract every PDF into `<paper_id>.bundle.json` under `out`.

    Shared entry point for the standalone command below and for pipelines
    that shell through to this package. Raises click.ClickException with a
    one-line message on the first file that fails.
    """
    if not pdfs:
        raise click.ClickException("no PDF files given")
    out_dir = Path(out)
    seen: dict[str, str] = {}
    written: list[Path] = []
    for pdf in pdfs:
        try:
            bundle = extract_document(pdf)
        except IngestError as exc:
            raise click.ClickException(str(exc))
        if bundle.paper_id in seen:
            raise click.ClickException(
                f"duplicate paper id {bundle.paper_id!r}: {pdf} collides with {seen[bundle.paper_id]}"
            )
        seen[bundle.paper_id] = pdf
        problems = validate_bundle(bundle)
        if problems:
            raise click.ClickException(f"{pdf}: invalid bundle: {'; '.join(problems)}")
        path = write_bundle(bundle, out_dir)
        click.echo(
            f"wrote {path} ({len(bundle.chunks)} chunks, {len(bundle.tables)} tables)"
        )
        written.append(path)
    return written


@click.command()
@click.argument("pdfs", nargs=-1, required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Directory for bundle files.")
def main(pdfs: tuple[str, ...], out: str) -> None:
    """Convert text-based paper PDFs into document bundles."""
    run_ingest(list(pdfs), out)


if __name__ == "__main__":
    main()
