"""Error types for the ingestion package."""

from __future__ import annotations


class IngestError(Exception):
    """A PDF could not be turned into a document bundle."""


class EncryptedPdfError(IngestError):
    """The PDF is encrypted and cannot be read without a password."""


class EmptyDocumentError(IngestError):
    """The PDF parsed cleanly but contains no extractable text."""


class PdfSyntaxError(IngestError):
    """The file does not follow the parts of the PDF format we rely on."""
