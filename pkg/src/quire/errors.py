"""Exception hierarchy shared across the engine.

Every error carries a short machine-readable ``code`` so the CLI and the
HTTP service can report failures uniformly.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class; ``code`` is a stable kebab-case identifier."""

    code = "internal-error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class TemplateNotFound(EngineError):
    code = "unknown-template"


class TemplateInvalid(EngineError):
    code = "invalid-template"


class TemplateChangeRejected(EngineError):
    code = "destructive-change"


class RecordNotFound(EngineError):
    code = "unknown-record"


class VersionNotFound(EngineError):
    code = "unknown-version"


class RecordInvalid(EngineError):
    """Raised when a record fails validation; carries the violation list."""

    code = "validation-failed"

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DocumentParseError(EngineError):
    """A structured document failed to parse; line/column when known."""

    code = "parse-error"

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownTarget(EngineError):
    code = "unknown-target"


class MatchConflict(EngineError):
    code = "exception-conflict"


class TypeMismatch(EngineError):
    code = "type-mismatch"


class AlreadySingleton(EngineError):
    code = "already-singleton"


class CycleDetected(EngineError):
    code = "cycle-detected"


class UnknownRole(EngineError):
    code = "unknown-role"


class EmptySlug(EngineError):
    code = "empty-slug"


class MissingMapping(EngineError):
    code = "missing-mapping"


class GraphMismatch(EngineError):
    code = "graph-iri-mismatch"


class UnknownIri(EngineError):
    code = "unknown-iri"


class MalformedQuery(EngineError):
    code = "malformed-query"


class StoreCorrupt(EngineError):
    """A file under the data directory could not be read back."""

    code = "corrupt-store"

    def __init__(self, message: str, *, path=None):
        super().__init__(message)
        self.path = path


class JobConflict(EngineError):
    code = "conflict"


class UnknownJob(EngineError):
    code = "unknown-job"


class PortInUse(EngineError):
    code = "port-in-use"
