"""Engine state: everything a simulation needs to continue, in one picklable value."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from btw.engine.buffers import Envelope, MessageBuffer
from btw.engine.journal import Journal
from btw.engine.scenario import Scenario
from btw.engine.trace import TraceLog
from btw.expr.snapshot import StoreSnapshot
from btw.expr.temporal import TemporalIndex
from btw.metamodel.registry import ConceptRegistry
from btw.models import Event, WorkflowModel


class Status(str, Enum):
    WAITING = "waiting"  # token taken, start conditions not met yet
    SUSPENDED = "suspended"  # sent a synchronous message, awaiting the reply
    RUNNING = "running"
    DONE = "done"
    ABORTED = "aborted"


LIVE = (Status.WAITING, Status.SUSPENDED, Status.RUNNING)


@dataclass
class Token:
    entity: str
    role: str | None = None
    # Key of the withdrawn entity a contingency stands in for
    substitutes: str | None = None
    retry: bool = False
    # Messages handed over by the service together with the token
    received: dict[str, list[dict]] = field(default_factory=dict)


@dataclass
class Execution:
    id: int
    entity: str
    activation: int
    status: Status = Status.WAITING
    role: str | None = None
    substitutes: str | None = None
    started: int | None = None
    due: int | None = None
    child: int | None = None
    outcome: str | None = None
    deadline: int | None = None
    awaiting: str | None = None  # reply message of a pending synchronous call
    sync_index: int = 0
    received: dict[str, list[dict]] = field(default_factory=dict)
    retry: bool = False


@dataclass
class Activation:
    """One running instance of a decomposition."""

    id: int
    body: str | None  # entity key whose children run here; None for a model root
    model: str
    owner: int | None = None  # execution id of the composite entity
    tokens: list[Token] = field(default_factory=list)
    # sync entity key -> incoming source key -> delivered token count
    sync_tokens: dict[str, dict[str, int]] = field(default_factory=dict)
    role: str | None = None
    # commit group -> execution ids completed so far
    groups: dict[str, list[int]] = field(default_factory=dict)
    closed: bool = False


@dataclass
class PendingReply:
    due: int
    exec_id: int
    service: str
    message: str
    records: list[dict]


@dataclass
class ServiceInstance:
    state: str
    entered_at: int = 0
    history: list[tuple[str, str, str, int]] = field(default_factory=list)
    overstay_reported: bool = False


@dataclass
class EngineState:
    model: WorkflowModel
    registry: ConceptRegistry
    scenario: Scenario
    seed: int
    rng: random.Random
    service: ServiceInstance
    snapshot: StoreSnapshot
    temporal: TemporalIndex = field(default_factory=TemporalIndex)
    journal: Journal = field(default_factory=Journal)
    trace: TraceLog = field(default_factory=TraceLog)
    clock: int = 0
    step_count: int = 0
    buffers: dict[str, MessageBuffer] = field(default_factory=dict)
    activations: dict[int, Activation] = field(default_factory=dict)
    roots: dict[str, int] = field(default_factory=dict)
    executions: dict[int, Execution] = field(default_factory=dict)
    events: deque[Event] = field(default_factory=deque)
    injection_cursor: int = 0
    replies_used: dict[str, int] = field(default_factory=dict)
    pending_replies: list[PendingReply] = field(default_factory=list)
    # Most recent arrival of each message from the environment
    arrivals: dict[str, Envelope] = field(default_factory=dict)
    failed_starts: dict[str, int] = field(default_factory=dict)
    armed_failures: dict[str, int] = field(default_factory=dict)
    withdrawn: set[str] = field(default_factory=set)
    decision_occurrences: dict[str, int] = field(default_factory=dict)
    quiescing: int | None = None  # waiting exclusive execution
    exclusive: int | None = None  # running exclusive execution
    next_id: int = 1
    done: bool = False

    def new_id(self) -> int:
        value = self.next_id
        self.next_id += 1
        return value

    def live(self) -> list[Execution]:
        return [e for e in self.executions.values() if e.status in LIVE]

    @property
    def pending_injections(self) -> int:
        return len(self.scenario.injections) - self.injection_cursor
