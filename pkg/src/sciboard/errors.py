"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SciboardError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(SciboardError):
    """A setting, plan, or input combination is invalid before any work starts."""


class BundleError(SciboardError):
    """A document bundle file is missing, malformed, or violates the schema."""


class GatewayError(SciboardError):
    """A live model call failed after retries."""


class CassetteMissError(GatewayError):
    """Replay mode was asked for a request that is not in the cassette."""

    def __init__(self, digest: str, detail: str = "") -> None:
        self.digest = digest
        msg = f"cassette miss for request digest {digest}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class CassetteLoadError(GatewayError):
    """A cassette file could not be parsed."""


class ContextEmptyError(SciboardError):
    """A prompt was requested with no chunks and no tables to show the model."""


class ExtractionParseError(SciboardError):
    """No tuple array could be recovered from a model response."""

    def __init__(self, message: str, raw_response: str) -> None:
        self.raw_response = raw_response
        super().__init__(message)


class GoldDataError(SciboardError):
    """A gold dataset file violates the schema; the message names the field path."""


class GoldIntegrityError(SciboardError):
    """A gold dataset is self-inconsistent (names outside taxonomy, bad stats, empty paper)."""


class LeaderboardError(SciboardError):
    """A built leaderboard set violates its own structural guarantees."""


class ArtifactError(SciboardError):
    """A run directory is missing required artifact files or holds corrupt ones."""
