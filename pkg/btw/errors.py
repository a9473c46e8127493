"""Source spans, diagnostics and the exception hierarchy shared by every layer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum


@dataclass(frozen=True, slots=True)
class SourceSpan:
    """Location in a spec file. Lines and columns are 1-based; end_col is exclusive."""

    file: str
    line: int
    col: int
    end_line: int | None = None
    end_col: int | None = None

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"

    def merge(self, other: SourceSpan) -> SourceSpan:
        return SourceSpan(
            self.file,
            self.line,
            self.col,
            other.end_line if other.end_line is not None else other.line,
            other.end_col if other.end_col is not None else other.col,
        )


NO_SPAN = SourceSpan("<model>", 1, 1)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: Severity
    message: str
    span: SourceSpan = NO_SPAN
    subject: tuple[str, ...] = ()
    anchor: str = ""
    hint: str = ""

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def to_record(self) -> dict:
        # Field order is part of the line-delimited output contract
        return {
            "code": self.code,
            "severity": self.severity.value,
            "file": self.span.file,
            "line": self.span.line,
            "col": self.span.col,
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    def to_text(self, color: bool = False) -> str:
        severity = self.severity.value
        if color:
            shade = "\033[31m" if self.is_error else "\033[33m"
            severity = f"{shade}{severity}\033[0m"
        text = f"{self.span}: {severity} {self.code}: {self.message}"
        if self.hint:
            text += f" (hint: {self.hint})"
        return text


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


class BtwError(Exception):
    """Base exception for all kernel errors."""


# --- Registry ---

class RegistryError(BtwError):
    pass


class DuplicateName(RegistryError):
    pass


class IllegalScope(RegistryError):
    pass


class KindMismatch(RegistryError):
    pass


class CycleIntroduced(RegistryError):
    pass


class UnknownConcept(RegistryError):
    pass


# --- Expressions ---

class ExpressionError(BtwError):
    pass


class UnboundVariable(ExpressionError):
    """Evaluation reached a name the type checker should have rejected."""


class MissingTemporalFact(ExpressionError):
    """A temporal function referenced an execution, message or state that never occurred."""


class SchemaViolation(ExpressionError):
    pass


class DecisionWriteAttempt(ExpressionError):
    pass


# --- Engine ---

class EngineError(BtwError):
    pass


class ModelInvalid(EngineError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        codes = ", ".join(sorted({d.code for d in diagnostics if d.is_error}))
        super().__init__(f"model has validation errors: {codes}")


class StuckState(EngineError):
    """No runnable work, no pending injections and the service is not dead."""

    def __init__(self, message: str, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace or []


class BudgetExhausted(EngineError):
    def __init__(self, message: str, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace or []


class StuckDecision(EngineError):
    pass


class ProtocolViolation(EngineError):
    pass


class MissingCompensation(EngineError):
    pass


class ScenarioError(EngineError):
    pass


class CheckpointError(EngineError):
    pass


class UnknownCode(BtwError):
    pass
