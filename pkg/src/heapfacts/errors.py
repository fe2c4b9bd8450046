"""Exception types raised across the toolchain."""


class HeapFactsError(Exception):
    """Base class for all errors raised by this package."""


class HeaderMalformed(HeapFactsError):
    """The dump header is unusable (bad magic prefix or identifier size)."""


class MalformedClassFile(HeapFactsError):
    """A class file could not be decoded (bad magic, truncated pool, ...)."""


class SiteMapSyntax(HeapFactsError):
    """A site-map file violates the documented line format."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EnricherShapeMismatch(HeapFactsError):
    """Instrumentation objects exist but lack the expected reference fields."""


class CycleDetected(HeapFactsError):
    """A receiver-context chain revisits an object (malformed enrichment)."""


class EmptyObserved(HeapFactsError):
    """The observed edge set of a recall comparison is empty."""


class InconsistentProgram(HeapFactsError):
    """A synthetic dump program references an undeclared id."""
