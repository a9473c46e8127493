"""Syntax tree of a `.btw` spec. Every node carries a span; spans are ignored by
equality so formatted-and-reparsed trees compare equal."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from btw.errors import SourceSpan
from btw.expr.ast import Counterpart, Expr, Stmt, span_field
from btw.expr.values import Duration

# --- scope block ---


@dataclass
class OrgUnitDecl:
    name: str
    parent: str | None = None
    span: SourceSpan = span_field()


@dataclass
class ActorDecl:
    name: str
    unit: str | None = None
    span: SourceSpan = span_field()


@dataclass
class RoleDecl:
    name: str
    span: SourceSpan = span_field()


@dataclass
class AssignDecl:
    actor: str
    role: str
    span: SourceSpan = span_field()


@dataclass
class UndertakeDecl:
    role: str
    process: str
    span: SourceSpan = span_field()


@dataclass
class StructureDecl:
    unit: str
    concept: str
    span: SourceSpan = span_field()


@dataclass
class ServiceDecl:
    name: str
    external: bool = False
    span: SourceSpan = span_field()


@dataclass
class MessageDecl:
    name: str
    external: bool = False
    schema: str | None = None
    span: SourceSpan = span_field()


@dataclass
class ObjTypeDecl:
    name: str
    nature: str
    schema: str | None = None
    span: SourceSpan = span_field()


@dataclass
class StoreDecl:
    name: str
    nature: str | None = None
    schema: str | None = None
    holds: list[str] = field(default_factory=list)
    fragment: str | None = None
    span: SourceSpan = span_field()


@dataclass
class BufferDecl:
    name: str
    protocol: str
    predicate: Expr | None = None
    holds: list[str] = field(default_factory=list)
    span: SourceSpan = span_field()


ScopeItem = Union[
    OrgUnitDecl, ActorDecl, RoleDecl, AssignDecl, UndertakeDecl, StructureDecl,
    ServiceDecl, MessageDecl, ObjTypeDecl, StoreDecl, BufferDecl,
]


@dataclass
class ScopeBlock:
    name: str
    items: list[ScopeItem] = field(default_factory=list)
    span: SourceSpan = span_field()


# --- schemas ---


@dataclass
class FieldDecl:
    name: str
    kind: str
    target: str | None = None
    span: SourceSpan = span_field()


@dataclass
class SchemaDecl:
    name: str
    fields: list[FieldDecl] = field(default_factory=list)
    span: SourceSpan = span_field()


# --- process models ---


@dataclass
class InitialClause:
    names: list[str]
    span: SourceSpan = span_field()


@dataclass
class TriggerClause:
    source: str
    target: str
    outcome: str | None = None
    span: SourceSpan = span_field()


@dataclass
class StoreRef:
    name: str
    span: SourceSpan = span_field()


@dataclass
class BufferRef:
    name: str
    span: SourceSpan = span_field()


@dataclass
class VarDecl:
    name: str
    kind: str
    target: str | None = None
    init: Expr | None = None
    span: SourceSpan = span_field()


@dataclass
class CommitClause:
    group: str
    members: list[str]
    span: SourceSpan = span_field()


@dataclass
class RoleClause:
    role: str
    span: SourceSpan = span_field()


@dataclass
class FlagClause:
    """Keyword-only clause; `exclusive` is the one flag so far."""

    flag: str
    span: SourceSpan = span_field()


@dataclass
class AmountClause:
    """`duration` or `timeout`, in seconds."""

    keyword: str
    seconds: int
    span: SourceSpan = span_field()


@dataclass
class ConditionClause:
    """`pre`, `post`, or a decision rule (`positive` / `negative`)."""

    keyword: str
    expr: Expr
    span: SourceSpan = span_field()


@dataclass
class HciClause:
    name: str
    schema: str | None = None
    span: SourceSpan = span_field()


@dataclass
class ActionClause:
    statements: list[Stmt]
    span: SourceSpan = span_field()


@dataclass
class MessagingClause:
    """`receive ... from` / `send ... to` / `take ... from buffer` / `put ... into buffer`."""

    verb: str
    messages: list[str]
    counterpart: Counterpart
    span: SourceSpan = span_field()


@dataclass
class SyncClause:
    send: str
    receive: str
    counterpart: Counterpart
    send_first: bool = True
    span: SourceSpan = span_field()


@dataclass
class TerminateClause:
    outcome: str
    span: SourceSpan = span_field()


@dataclass
class AbortClause:
    on: str
    as_: str | None = None
    span: SourceSpan = span_field()


@dataclass
class CombineClause:
    mode: str
    span: SourceSpan = span_field()


@dataclass
class EntityDecl:
    kind: str  # process | decision | sync
    name: str
    # None when declared without a body
    clauses: list["Clause"] | None = None
    span: SourceSpan = span_field()


Clause = Union[
    InitialClause, TriggerClause, StoreRef, BufferRef, VarDecl, CommitClause, RoleClause,
    FlagClause, AmountClause, ConditionClause, HciClause, ActionClause, MessagingClause,
    SyncClause, TerminateClause, AbortClause, CombineClause, EntityDecl,
]


@dataclass
class ModelDecl:
    name: str
    entities: list[EntityDecl] = field(default_factory=list)
    span: SourceSpan = span_field()


# --- service model ---


@dataclass
class StateDecl:
    name: str
    max: Duration | None = None
    span: SourceSpan = span_field()


@dataclass
class EventSpec:
    kind: str
    subject: str | None = None
    outcome: str | None = None
    threshold: int | None = None
    expr: Expr | None = None
    span: SourceSpan = span_field()


@dataclass
class ActionSpec:
    kind: str  # forward | trigger | send | none
    message: str | None = None
    target: str | None = None
    span: SourceSpan = span_field()


@dataclass
class TransitionDecl:
    source: str
    event: EventSpec
    target: str | None = None
    condition: Expr | None = None
    actions: list[ActionSpec] = field(default_factory=list)
    span: SourceSpan = span_field()


@dataclass
class ServiceModelDecl:
    name: str
    states: list[StateDecl] = field(default_factory=list)
    transitions: list[TransitionDecl] = field(default_factory=list)
    span: SourceSpan = span_field()


# --- recovery table ---


@dataclass
class Rung:
    # None is the unbounded `*` threshold; target None means self
    threshold: int | None
    target: str | None = None
    span: SourceSpan = span_field()


@dataclass
class RecoveryEntry:
    entity: str
    ladder: list[Rung] | None = None
    rollback: str | None = None
    compensate: str | None = None
    span: SourceSpan = span_field()


@dataclass
class RecoveryDecl:
    entries: list[RecoveryEntry] = field(default_factory=list)
    span: SourceSpan = span_field()


@dataclass
class SpecAst:
    scope: ScopeBlock
    schemas: list[SchemaDecl] = field(default_factory=list)
    models: list[ModelDecl] = field(default_factory=list)
    services: list[ServiceModelDecl] = field(default_factory=list)
    recoveries: list[RecoveryDecl] = field(default_factory=list)
    span: SourceSpan = span_field()
