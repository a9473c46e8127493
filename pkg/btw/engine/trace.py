"""Trace entries: the observable record of a simulation run, one JSON object per line."""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field

from btw.expr.values import to_plain


class TraceKind(str, Enum):
    ENTITY_STARTED = "EntityStarted"
    ENTITY_COMPLETED = "EntityCompleted"
    DECISION_OUTCOME = "DecisionOutcome"
    MESSAGE_SENT = "MessageSent"
    MESSAGE_RECEIVED = "MessageReceived"
    BUFFER_PUT = "BufferPut"
    BUFFER_TAKE = "BufferTake"
    STATE_TRANSITION = "StateTransition"
    COMMIT = "Commit"
    ABORT_RAISED = "AbortRaised"
    REDO_ATTEMPT = "RedoAttempt"
    CONTINGENCY_FIRED = "ContingencyFired"
    UNDO_APPLIED = "UndoApplied"
    COMPENSATION_STARTED = "CompensationStarted"
    TEMPORAL_VIOLATION = "TemporalViolation"
    QUIESCE = "Quiesce"
    DEATH = "Death"


class TraceEntry(BaseModel):
    seq: int
    clock: int
    kind: TraceKind
    subject: list[str] = Field(default_factory=list)
    detail: dict = Field(default_factory=dict)
    digest: str = ""

    def to_line(self) -> str:
        return json.dumps(self.model_dump(mode="json"), ensure_ascii=False, separators=(",", ":"))


def digest_of(kind: TraceKind, subject: list[str], detail: dict) -> str:
    canonical = json.dumps(
        {"kind": kind.value, "subject": subject, "detail": detail},
        sort_keys=True, ensure_ascii=False, separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class TraceLog:
    """Append-only log; seq numbers start at 1 and never repeat."""

    def __init__(self):
        self.entries: list[TraceEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def emit(self, clock: int, kind: TraceKind, subject: list[str] | tuple[str, ...], /, **detail) -> TraceEntry:
        subject = [str(s) for s in subject]
        detail = {k: to_plain(v) for k, v in detail.items() if v is not None}
        entry = TraceEntry(
            seq=len(self.entries) + 1,
            clock=clock,
            kind=kind,
            subject=subject,
            detail=detail,
            digest=digest_of(kind, subject, detail),
        )
        self.entries.append(entry)
        return entry

    def since(self, seq: int) -> list[TraceEntry]:
        return self.entries[seq:]


def write_trace(entries: list[TraceEntry], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            f.write(entry.to_line() + "\n")


def read_trace(path: Path) -> list[TraceEntry]:
    with open(path, encoding="utf-8") as f:
        return [TraceEntry.model_validate_json(line) for line in f if line.strip()]
