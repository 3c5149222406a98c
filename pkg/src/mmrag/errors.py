"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class MMRagError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(MMRagError):
    """Invalid configuration value or toggle combination."""


class DocumentValidationError(MMRagError):
    """Raised when an operation requires a valid document and gets violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"document failed validation: {lines}")


class ProviderError(MMRagError):
    """Transport-level provider failure after retries were exhausted."""

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(f"{message} (attempts={attempts})")


class ProtocolError(MMRagError):
    """Provider replied, but the payload violates the wire contract."""


class StructuredOutputError(MMRagError):
    """Model reply could not be parsed into the structured answer format."""


class IndexArtifactError(MMRagError):
    """Index construction, persistence, or loading failure."""
