"""Failure and non-failure aborts: rollforward with contingency ladders, and
rollback by undo or compensation over the current service state's execution path."""

from __future__ import annotations

import logging

from btw.engine.journal import JournalEntry
from btw.engine.runtime import add_token, bindings_for, cancel_all, emit, enqueue_event, perform
from btw.engine.state import Activation, EngineState, Execution, Status
from btw.engine.trace import TraceKind
from btw.errors import MissingCompensation
from btw.models import Entity, Event

logger = logging.getLogger(__name__)

FAILURE = "failure"
NONFAILURE = "nonfailure"


def _contingency_key(engine: EngineState, activation: Activation, name: str) -> str | None:
    if activation.body is not None:
        for key in engine.model.entities[activation.body].children:
            if engine.model.entities[key].name == name:
                return key
    entity = engine.model.find(name)
    return entity.key if entity else None


def register_failure(
    engine: EngineState,
    activation: Activation,
    key: str,
    role: str | None = None,
    substitutes: str | None = None,
) -> None:
    """Count a failed start and apply the entity's redo ladder."""
    entity = engine.model.entities[key]
    count = engine.failed_starts.get(entity.name, 0) + 1
    engine.failed_starts[entity.name] = count
    emit(engine, TraceKind.ABORT_RAISED, [entity.name], kind=FAILURE, attempt=count)
    emit(engine, TraceKind.REDO_ATTEMPT, [entity.name], attempt=count)
    enqueue_event(engine, Event("process_start_failed", entity.name, threshold=count))

    spec = engine.model.recovery.get(entity.name)
    rung = next((r for r in spec.ladder if r[0] == count), None) if spec else None
    if rung is not None:
        target = rung[1]
        emit(engine, TraceKind.CONTINGENCY_FIRED, [entity.name, target or entity.name], attempt=count)
        if target is not None:
            c_key = _contingency_key(engine, activation, target)
            finite = [threshold for threshold, _ in spec.ladder if threshold is not None]
            if count == max(finite) and not spec.forcible:
                engine.withdrawn.add(entity.name)
                logger.info(f"'{entity.name}' withdrawn after {count} failed starts; '{target}' substitutes")
                add_token(engine, activation, c_key, role, substitutes=substitutes or key)
                return
            add_token(engine, activation, c_key, role)
    add_token(engine, activation, key, role, substitutes, retry=True)


def inject_failure(engine: EngineState, name: str, count: int = 1) -> None:
    """Arm `count` start failures for an entity; a running execution crashes now."""
    engine.armed_failures[name] = engine.armed_failures.get(name, 0) + count
    for execution in engine.live():
        entity = engine.model.entities[execution.entity]
        if entity.name != name or execution.status is Status.WAITING:
            continue
        crash(engine, execution)
        engine.armed_failures[name] -= 1
        register_failure(engine, engine.activations[execution.activation], entity.key, execution.role, execution.substitutes)
        break


def crash(engine: EngineState, execution: Execution) -> None:
    """Stop an execution and everything running below it without applying effects."""
    execution.status = Status.ABORTED
    engine.temporal.discard_open(engine.model.entities[execution.entity].name)
    if execution.child is not None:
        child = engine.activations[execution.child]
        for inner in engine.live():
            if inner.activation == child.id:
                crash(engine, inner)
        child.tokens.clear()
        child.closed = True
    if engine.exclusive == execution.id:
        engine.exclusive = None
    engine.pending_replies = [r for r in engine.pending_replies if r.exec_id != execution.id]


def run_compensation(engine: EngineState, compensator: Entity, entry: JournalEntry) -> None:
    emit(engine, TraceKind.COMPENSATION_STARTED, [compensator.name, entry.name], exec=entry.exec_id)
    exec_id = engine.new_id()
    engine.temporal.record_start(compensator.name, engine.clock)
    emit(engine, TraceKind.ENTITY_STARTED, [compensator.name], exec=exec_id, compensates=entry.name)
    deltas = perform(engine, compensator, None, bindings_for(engine, compensator))
    engine.temporal.record_end(compensator.name, engine.clock)
    engine.journal.record(JournalEntry(
        exec_id, compensator.key, compensator.name, engine.clock, engine.clock, deltas, committed=True,
    ))
    emit(engine, TraceKind.ENTITY_COMPLETED, [compensator.name], exec=exec_id, committed=True)


def rollback(engine: EngineState, subject: str, reason: str = "") -> None:
    """Non-failure abort: undo or compensate everything run since the service entered its state."""
    emit(engine, TraceKind.ABORT_RAISED, [subject], kind=NONFAILURE, reason=reason or None)
    logger.info(f"non-failure abort at '{subject}' (clock {engine.clock}): {reason}")

    for entry in engine.journal.since(engine.service.entered_at):
        if entry.is_decision:
            continue
        if not entry.committed:
            engine.snapshot = engine.journal.undo(entry, engine.snapshot)
            emit(engine, TraceKind.UNDO_APPLIED, [entry.name], exec=entry.exec_id, deltas=len(entry.deltas))
            continue
        spec = engine.model.recovery.get(entry.name)
        if spec is None or spec.rollback == "null":
            continue
        if spec.rollback == "undo":
            logger.warning(f"undo requested for committed execution {entry.exec_id} of '{entry.name}'; left in place")
            continue
        compensator = engine.model.find(spec.compensate) if spec.compensate else None
        if compensator is None:
            raise MissingCompensation(f"'{entry.name}' is compensated by unknown entity '{spec.compensate}'")
        run_compensation(engine, compensator, entry)

    cancel_all(engine)
    enqueue_event(engine, Event("abort", outcome=NONFAILURE))


def raise_abort(engine: EngineState, kind: str, at: str | None = None, count: int = 1, reason: str = "") -> EngineState:
    if kind == FAILURE:
        if at is None:
            raise ValueError("a failure abort needs an entity")
        inject_failure(engine, at, count)
    else:
        rollback(engine, at or "environment", reason)
    return engine

