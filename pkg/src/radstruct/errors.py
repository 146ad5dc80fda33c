"""Exception hierarchy shared by every engine layer.

Errors carry a machine-readable ``code`` and an optional ``target`` (a
field path, span, or identifier) so HTTP responses and CLI output can
name what went wrong without string parsing.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "engine_error"

    def __init__(self, message: str, target: str | None = None):
        super().__init__(message)
        self.message = message
        self.target = target

    def to_payload(self) -> dict:
        return {"code": self.code, "message": self.message, "target": self.target}


class ModelValidationError(EngineError):
    """A domain-type invariant does not hold; ``target`` names the field."""

    code = "validation_error"


class CanonicalParseError(EngineError):
    """Canonical document text is malformed; ``offset`` is a byte offset."""

    code = "parse_error"

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message, target=None if offset is None else f"byte {offset}")
        self.offset = offset


class UnknownUnit(EngineError):
    code = "unknown_unit"


class DimensionMismatch(EngineError):
    code = "dimension_mismatch"


class MeasurementError(EngineError):
    code = "measurement_error"


class DuplicateTemplate(EngineError):
    code = "duplicate_template"


class TemplateError(EngineError):
    code = "template_error"


class NoTemplate(EngineError):
    code = "no_template"


class EvidenceConflict(EngineError):
    code = "evidence_conflict"


class UnknownEvidence(EngineError):
    code = "unknown_evidence"


class ProvenanceRuleViolation(EngineError):
    code = "provenance_rule_violation"


class CompositionGap(EngineError):
    """A finding has no matching phrase pattern; it must be written manually."""

    code = "composition_gap"


class NotAcknowledgeable(EngineError):
    code = "not_acknowledgeable"


class ExportBlocked(EngineError):
    code = "export_blocked"


class ApprovalBlocked(EngineError):
    """Approval refused; ``issues`` lists the blocking consistency issues."""

    code = "approval_blocked"

    def __init__(self, message: str, issues: list | None = None):
        super().__init__(message)
        self.issues = issues or []


class DocumentImportError(EngineError):
    """An interchange document failed schema validation; ``target`` is the path."""

    code = "import_error"


class SessionConflict(EngineError):
    code = "session_conflict"


class SessionNotFound(EngineError):
    code = "not_found"


class Forbidden(EngineError):
    code = "forbidden"


class Unauthorized(EngineError):
    code = "unauthorized"


class InvalidTransition(EngineError):
    """Operation not allowed from the session's current state."""

    code = "invalid_transition"


class IntegrityError(EngineError):
    """Audit log is gapped, reordered, or otherwise tampered."""

    code = "integrity_error"


class UnknownModule(EngineError):
    code = "unknown_module"
