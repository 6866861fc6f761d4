"""PDF-to-bundle ingestion for the sciboard pipeline."""

from __future__ import annotations

__version__ = "0.1.0"

from .document import (
    DocumentBundle,
    chunk_text,
    extract_document,
    validate_bundle,
    write_bundle,
)
from .errors import EmptyDocumentError, EncryptedPdfError, IngestError, PdfSyntaxError

__all__ = [
    "DocumentBundle",
    "EmptyDocumentError",
    "EncryptedPdfError",
    "IngestError",
    "PdfSyntaxError",
    "chunk_text",
    "extract_document",
    "validate_bundle",
    "write_bundle",
]
