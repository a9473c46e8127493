"""The lowered workflow model: the process-entity graph with its decompositions,
storage entities, recovery specs and the service state machine."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from btw.errors import NO_SPAN, SourceSpan
from btw.expr.ast import Counterpart, Expr, Stmt
from btw.expr.values import Duration, ExprType
from btw.metamodel.registry import ConceptId


class EntityKind(str, Enum):
    PROCESS = "process"
    DECISION = "decision"
    SYNC = "sync"


class MessagingMode(str, Enum):
    ASYNC_IN = "async_in"
    ASYNC_OUT = "async_out"
    SYNC = "sync"


@dataclass
class Messaging:
    message: str
    mode: MessagingMode
    counterpart: Counterpart
    # Buffer carrying the message; explicit, implicit or a service inbox
    buffer: str | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class SyncCall:
    send: str
    receive: str
    counterpart: Counterpart
    send_first: bool = True
    # Buffers used when the counterpart is another entity
    out_buffer: str | None = None
    in_buffer: str | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class Trigger:
    source: str
    target: str
    outcome: str | None = None
    # Key of the decomposition whose body declared the trigger
    declared_in: str | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class VarInfo:
    name: str
    type: ExprType
    init: Expr | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class Entity:
    key: str
    name: str
    kind: EntityKind
    model: str
    concept: ConceptId | None = None
    parent: str | None = None
    children: list[str] = field(default_factory=list)
    # Ancestor whose decomposition this bodiless declaration reuses
    recursive_of: str | None = None
    has_body: bool = False
    initial: list[str] = field(default_factory=list)
    receives: list[Messaging] = field(default_factory=list)
    sends: list[Messaging] = field(default_factory=list)
    syncs: list[SyncCall] = field(default_factory=list)
    role: str | None = None
    exclusive: bool = False
    duration: int = 0
    timeout: int | None = None
    pre: Expr | None = None
    post: Expr | None = None
    action: list[Stmt] = field(default_factory=list)
    hci: list[tuple[str, str | None]] = field(default_factory=list)
    # Decision rules by outcome, plus complex-decision terminators
    rules: dict[str, Expr] = field(default_factory=dict)
    terminates: list[str] = field(default_factory=list)
    aborts: dict[str, str] = field(default_factory=dict)
    combine: str = "all"
    # Storage entities and variables local to this decomposition
    locse: list[str] = field(default_factory=list)
    locvar: dict[str, VarInfo] = field(default_factory=dict)
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def is_composite(self) -> bool:
        return bool(self.children) or self.recursive_of is not None

    @property
    def body(self) -> str:
        """Key of the entity whose decomposition runs when this one starts."""
        return self.recursive_of or self.key


@dataclass
class StoreInfo:
    name: str
    schema: str | None = None
    nature: str | None = None
    holds: list[str] = field(default_factory=list)
    fragment: str | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class MessageInfo:
    name: str
    schema: str | None = None
    external: bool = False
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class BufferInfo:
    name: str
    protocol: str = "fifo"
    predicate: Expr | None = None
    holds: list[str] = field(default_factory=list)
    implicit: bool = False
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class Event:
    kind: str
    subject: str | None = None
    outcome: str | None = None
    threshold: int | None = None
    expr: Expr | None = None


@dataclass
class EcaAction:
    kind: str
    message: str | None = None
    target: str | None = None


@dataclass
class Transition:
    id: str
    source: str
    target: str | None
    event: Event
    condition: Expr | None = None
    actions: list[EcaAction] = field(default_factory=list)
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class ServiceModel:
    name: str
    states: list[str] = field(default_factory=list)
    state_max: dict[str, Duration] = field(default_factory=dict)
    transitions: list[Transition] = field(default_factory=list)
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def outgoing(self, state: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == state]


@dataclass
class RecoverySpec:
    entity: str
    # (threshold or None for unbounded, contingency name or None for self)
    ladder: list[tuple[int | None, str | None]] = field(default_factory=list)
    rollback: str = "undo"
    compensate: str | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def forcible(self) -> bool:
        return any(threshold is None and target is None for threshold, target in self.ladder)


@dataclass
class CommitGroup:
    name: str
    owner: str
    members: list[str]
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass
class WorkflowModel:
    name: str
    models: dict[str, list[str]] = field(default_factory=dict)
    entities: dict[str, Entity] = field(default_factory=dict)
    triggers: list[Trigger] = field(default_factory=list)
    schemas: dict[str, dict[str, ExprType]] = field(default_factory=dict)
    stores: dict[str, StoreInfo] = field(default_factory=dict)
    messages: dict[str, MessageInfo] = field(default_factory=dict)
    buffers: dict[str, BufferInfo] = field(default_factory=dict)
    services: dict[str, bool] = field(default_factory=dict)
    objtypes: dict[str, str] = field(default_factory=dict)
    service: ServiceModel | None = None
    recovery: dict[str, RecoverySpec] = field(default_factory=dict)
    commit_groups: list[CommitGroup] = field(default_factory=list)
    # Facts the validator reports on, gathered while lowering
    rejected_suborgs: list[tuple[str, str, SourceSpan]] = field(default_factory=list, compare=False)
    duplicate_names: list[tuple[str, str, SourceSpan]] = field(default_factory=list, compare=False)
    spans: dict[str, SourceSpan] = field(default_factory=dict, compare=False)

    def by_name(self, name: str) -> list[Entity]:
        return [e for e in self.entities.values() if e.name == name]

    def find(self, name: str) -> Entity | None:
        return next((e for e in self.entities.values() if e.name == name), None)

    def incoming(self, key: str) -> list[Trigger]:
        return [t for t in self.triggers if t.target == key]

    def outgoing(self, key: str, outcome: str | None = None) -> list[Trigger]:
        return [
            t for t in self.triggers
            if t.source == key and (outcome is None or t.outcome is None or t.outcome == outcome)
        ]

    def ancestors(self, key: str) -> list[str]:
        chain = []
        parent = self.entities[key].parent
        while parent is not None:
            chain.append(parent)
            parent = self.entities[parent].parent
        return chain

    def record_schema(self, store: str) -> dict[str, ExprType]:
        info = self.stores.get(store)
        return self.schemas.get(info.schema, {}) if info and info.schema else {}

    def message_schema(self, message: str) -> dict[str, ExprType]:
        info = self.messages.get(message)
        return self.schemas.get(info.schema, {}) if info and info.schema else {}
