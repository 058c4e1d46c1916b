"""Exception hierarchy shared by the whole toolkit.

Everything raised on purpose derives from CvaError so callers (and the CLI)
can distinguish expected failures from bugs.
"""

from __future__ import annotations


class CvaError(Exception):
    """Base class for all toolkit errors."""


class MalformedJsonError(CvaError):
    """A line that should contain exactly one JSON object could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None, source: str | None = None):
        self.line_no = line_no
        self.source = source
        prefix = _location(source, line_no)
        super().__init__(f"{prefix}{message}")


class MissingFieldError(CvaError):
    """A required field is absent from a JSON record."""

    def __init__(self, field: str, line_no: int | None = None, source: str | None = None):
        self.field = field
        self.line_no = line_no
        self.source = source
        prefix = _location(source, line_no)
        super().__init__(f"{prefix}missing required field '{field}'")


class DuplicateIdError(CvaError):
    """The same id appears more than once where uniqueness is required."""


class EmptyTruthSetError(CvaError):
    """A ground-truth record lists no correct ids for a column."""


class CorpusLoadError(CvaError):
    """One or more lines of a corpus file failed to parse.

    Carries the full list of per-line error messages so nothing is silently
    dropped (a lost row would corrupt every hit@k denominator downstream).
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        summary = "; ".join(self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{len(self.errors)} line(s) failed to load: {summary}{more}")


class DimMismatchError(CvaError):
    """Vectors of different dimensionality were mixed."""


class EmptyIndexError(CvaError):
    """A similarity index cannot be built from zero entries."""


class BackendUnavailableError(CvaError):
    """A remote embedding service could not be reached after retries."""


class CacheCorruptError(CvaError):
    """An on-disk embedding cache could not be read back consistently."""


class TooManyShardsError(CvaError):
    """More shards requested than there are glossary entries."""


class EmptyBatchError(CvaError):
    """Prompt rendering was asked to serialize an empty metadata batch."""


class UnparseableResponseError(CvaError):
    """No column/term pairs could be recovered from a model response."""


class ChatRequestError(CvaError):
    """A chat-completions request failed for good after retries.

    `reason` is a short machine-friendly tag ("timeout", "rate limited",
    "http 500", "model refusal", ...) used to label failed runs in reports.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ContextBudgetError(CvaError):
    """The glossary payload would exceed the configured context budget."""


def _location(source: str | None, line_no: int | None) -> str:
    if source and line_no is not None:
        return f"{source}:{line_no}: "
    if line_no is not None:
        return f"line {line_no}: "
    if source:
        return f"{source}: "
    return ""
