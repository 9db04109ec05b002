"""Exception taxonomy. Every error raised by the package derives from PartiturError."""


class PartiturError(Exception):
    """Base class for all pipeline errors."""


class ManifestError(PartiturError):
    """manifest.json is missing, unreadable, or structurally invalid."""


class SchemaValidationError(PartiturError):
    """An artifact or value violates its declared shape.

    Carries the offending field paths when known.
    """

    def __init__(self, message: str, paths: list[str] | None = None):
        self.paths = list(paths or [])
        if self.paths:
            message = f"{message} (at: {', '.join(self.paths)})"
        super().__init__(message)


class ConfigError(PartiturError):
    """gateway.toml is unreadable or carries unknown sections/keys."""


class PdfError(PartiturError):
    """PDF cannot be parsed or a page cannot be rasterized."""


class VideoError(PartiturError):
    """Video cannot be opened or decoding failed mid-stream."""


class SyncError(PartiturError):
    """Slide/video alignment failed (e.g. no slide ever detected)."""


class CurationError(PartiturError):
    """Curation override references an unknown slide or conflicts with itself."""


class TemplateError(PartiturError):
    """Instruction template missing, or rendered with the wrong variable set."""


class ProviderError(PartiturError):
    """Transient provider failure; retriable."""


class ProviderExhausted(PartiturError):
    """Provider still failing after the configured retry/repair budget."""


class TranscriptError(PartiturError):
    """Transcript segments are malformed or fall outside the video."""


class StageInputError(PartiturError):
    """A stage was invoked without its upstream artifact, or with artifacts
    from different presentations."""


class LockError(PartiturError):
    """Another pipeline run holds the lock for this presentation."""
