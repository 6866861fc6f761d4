"""From positioned text runs to document bundles.

A bundle is one paper's extracted content: ordered body-text chunks plus
linearized tables, written as `<paper_id>.bundle.json`. The layout model is
deliberately simple and suits machine-generated papers: runs sharing a
baseline form a line, lines with a single run are running text, and two or
more consecutive lines that each carry several runs form a table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import EmptyDocumentError, EncryptedPdfError, IngestError, PdfSyntaxError
from .pdftext import PdfDocument, TextRun, text_runs

MAX_CHUNK_CHARS = 2000
BOUNDARY_WINDOW = 200
BUNDLE_SUFFIX = ".bundle.json"

# Runs whose baselines differ by no more than this many points share a line.
LINE_Y_TOLERANCE = 2.0
CELL_SEPARATOR = " | "
# A lone line with several runs stays body text; real tables have at least
# a header row and a data row.
MIN_TABLE_ROWS = 2


@dataclass(frozen=True)
class DocumentBundle:
    paper_id: str
    chunks: tuple[str, ...]
    tables: tuple[str, ...]
    source_path: str

    def to_json(self) -> dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "chunks": list(self.chunks),
            "tables": list(self.tables),
            "source_path": self.source_path,
        }


@dataclass(frozen=True)
class Line:
    y: float
    cells: tuple[str, ...]


def chunk_text(body: str, max_len: int = MAX_CHUNK_CHARS) -> list[str]:
    """Split `body` into pieces of at most `max_len` chars whose concatenation
    reproduces `body` exactly, cutting after whitespace when one falls within
    the boundary window."""
    if max_len < 1:
        raise ValueError(f"max_len must be positive, got {max_len}")
    window = min(BOUNDARY_WINDOW, max_len - 1)
    chunks: list[str] = []
    pos = 0
    total = len(body)
    while pos < total:
        hard_end = pos + max_len
        if hard_end >= total:
            chunks.append(body[pos:])
            break
        cut = hard_end
        for i in range(hard_end - 1, hard_end - 1 - window, -1):
            if body[i].isspace():
                cut = i + 1
                break
        chunks.append(body[pos:cut])
        pos = cut
    return chunks


def group_lines(runs: Iterable[TextRun]) -> list[Line]:
    """Runs grouped by baseline, top to bottom, cells left to right."""
    ordered = sorted(
        (run for run in runs if run.text.strip()),
        key=lambda run: (-run.y, run.x),
    )
    lines: list[Line] = []
    current: list[TextRun] = []
    anchor_y = 0.0
    for run in ordered:
        if current and abs(run.y - anchor_y) <= LINE_Y_TOLERANCE:
            current.append(run)
        else:
            if current:
                lines.append(Line(anchor_y, tuple(r.text for r in current)))
            current = [run]
            anchor_y = run.y
    if current:
        lines.append(Line(anchor_y, tuple(r.text for r in current)))
    return lines


def split_blocks(lines: Sequence[Line]) -> tuple[list[str], list[str]]:
    """Partition a page's lines into body-text lines and linearized tables.

    Each maximal block of at least MIN_TABLE_ROWS consecutive multi-run lines
    becomes one table string: cells joined by CELL_SEPARATOR, rows by newline.
    """
    body: list[str] = []
    tables: list[str] = []
    i = 0
    while i < len(lines):
        if len(lines[i].cells) >= 2:
            j = i
            while j < len(lines) and len(lines[j].cells) >= 2:
                j += 1
            block = lines[i:j]
            if len(block) >= MIN_TABLE_ROWS:
                tables.append(
                    "\n".join(CELL_SEPARATOR.join(line.cells) for line in block)
                )
            else:
                body.extend(" ".join(line.cells) for line in block)
            i = j
        else:
            body.append(lines[i].cells[0])
            i += 1
    return body, tables


def extract_document(pdf_path: str | Path) -> DocumentBundle:
    """Extract one PDF into a bundle.

    The paper id is the file name without its extension. Body text keeps
    reading order: lines joined by newlines, pages by blank lines; the chunks
    concatenate back to it exactly. Raises IngestError subclasses for
    unreadable, encrypted, or textless files.
    """
    path = Path(pdf_path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if b"%PDF-" not in data[:1024]:
        raise IngestError(f"{path} is not a PDF: missing %PDF header")
    try:
        doc = PdfDocument(data)
    except PdfSyntaxError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    if doc.is_encrypted:
        raise EncryptedPdfError(f"{path} is encrypted; cannot extract text")
    page_bodies: list[str] = []
    tables: list[str] = []
    try:
        for page in doc.pages():
            body_lines, page_tables = split_blocks(
                group_lines(text_runs(doc.page_content(page)))
            )
            if body_lines:
                page_bodies.append("\n".join(body_lines))
            tables.extend(page_tables)
    except PdfSyntaxError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    body = "\n\n".join(page_bodies)
    if not body and tables:
        # tables-only document: its reading-order text is the tables
        body = "\n\n".join(tables)
    if not body:
        raise EmptyDocumentError(f"no extractable text in {path}")
    return DocumentBundle(
        paper_id=path.stem,
        chunks=tuple(chunk_text(body)),
        tables=tuple(tables),
        source_path=str(pdf_path),
    )


def validate_bundle(bundle: DocumentBundle) -> list[str]:
    """Invariant violations for a bundle; an empty list means it is valid."""
    problems: list[str] = []
    if not bundle.paper_id or not bundle.paper_id.strip():
        problems.append("missing paper_id")
    if not bundle.chunks:
        problems.append("empty chunk list")
    for i, chunk in enumerate(bundle.chunks):
        if not chunk:
            problems.append(f"chunk {i} is empty")
        elif len(chunk) > MAX_CHUNK_CHARS:
            problems.append(
                f"chunk {i} exceeds {MAX_CHUNK_CHARS:,} characters ({len(chunk)} chars)"
            )
    return problems


def write_bundle(bundle: DocumentBundle, out_dir: str | Path) -> Path:
    """Write `<paper_id>.bundle.json` under `out_dir` and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{bundle.paper_id}{BUNDLE_SUFFIX}"
    payload = json.dumps(bundle.to_json(), ensure_ascii=False, indent=2) + "\n"
    path.write_text(payload, encoding="utf-8")
    return path
