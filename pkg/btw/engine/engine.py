"""Deterministic discrete-event scheduler.

Each call to `step` performs exactly one micro-step, chosen by a fixed priority:
resume a suspended execution or complete a due one, dispatch one ECA event,
fire a ready synchroniser, start one entity, and finally advance the clock to
the next timed item and consume an injection."""

from __future__ import annotations

import logging
import random

from btw.config import settings
from btw.dsl.formatter import format_expr
from btw.dsl.parser import BIRTH, DEATH
from btw.engine import recovery
from btw.engine.buffers import MessageBuffer, protocol_of
from btw.engine.decisions import ABORT, evaluate_decision
from btw.engine.eca import check_overstay, check_timers, dispatch_eca, overstay_deadline, state_label
from btw.engine.journal import JournalEntry
from btw.engine.runtime import (
    add_token,
    arrive,
    bindings_for,
    deliver_triggers,
    emit,
    enqueue_event,
    get_buffer,
    inside,
    perform,
    root_activation,
    route_message,
    settle,
    sync_ready,
    take_message,
)
from btw.engine.scenario import Scenario, ScenarioRecord
from btw.engine.state import Activation, EngineState, Execution, PendingReply, ServiceInstance, Status, Token
from btw.engine.trace import TraceEntry, TraceKind
from btw.errors import (
    BudgetExhausted,
    EngineError,
    ExpressionError,
    ModelInvalid,
    ProtocolViolation,
    ScenarioError,
    StuckState,
    has_errors,
)
from btw.expr.ast import Counterpart, is_temporal_only, uses_temporal
from btw.expr.evaluator import Bindings, check_temporal, eval_condition, eval_predicate, evaluate
from btw.expr.snapshot import StoreSnapshot
from btw.expr.values import coerce, zero_value
from btw.metamodel.registry import ConceptRegistry
from btw.models import Entity, EntityKind, Event, SyncCall, WorkflowModel
from btw.validator import validate

logger = logging.getLogger(__name__)


# --- initialisation ---

def _check_scenario(model: WorkflowModel, scenario: Scenario) -> None:
    for name in scenario.overrides:
        entity = model.find(name)
        if entity is None or entity.kind is not EntityKind.DECISION:
            raise ScenarioError(f"override names unknown decision '{name}'")
    for service in scenario.replies:
        if service not in model.services:
            raise ScenarioError(f"reply script names unknown service '{service}'")
    for record in scenario.injections:
        if record.kind == "message" and record.target not in model.messages:
            raise ScenarioError(f"t={record.t}: unknown message type '{record.target}'")
        if record.kind == "f_abort" and model.find(record.target or "") is None:
            raise ScenarioError(f"t={record.t}: f_abort names unknown entity '{record.target}'")


def _initial_snapshot(model: WorkflowModel) -> StoreSnapshot:
    schemas = {name: model.record_schema(name) for name in model.stores}
    snapshot = StoreSnapshot.empty(schemas)
    variables = {}
    for entity in model.entities.values():
        if not entity.locvar:
            continue
        values = {}
        for name, info in entity.locvar.items():
            if info.init is None:
                values[name] = zero_value(info.type)
            else:
                values[name] = evaluate(info.init, snapshot, None, Bindings(locals=dict(values)))
        variables[entity.key] = values
    return StoreSnapshot(snapshot.stores, variables, snapshot.schemas)


def init_instance(
    model: WorkflowModel,
    registry: ConceptRegistry,
    scenario: Scenario | None = None,
    seed: int | None = None,
) -> EngineState:
    """Fresh engine state at birth. Refuses models that do not validate."""
    diagnostics = validate(model, registry)
    if has_errors(diagnostics):
        raise ModelInvalid(diagnostics)
    scenario = scenario or Scenario()
    _check_scenario(model, scenario)
    seed = settings.seed if seed is None else seed

    state = EngineState(
        model=model,
        registry=registry,
        scenario=scenario,
        seed=seed,
        rng=random.Random(seed),
        service=ServiceInstance(BIRTH),
        snapshot=_initial_snapshot(model),
    )
    state.temporal.record_state(BIRTH, 0)
    for name, info in model.buffers.items():
        state.buffers[name] = MessageBuffer(name, protocol_of(info.protocol))
    if model.service is None:
        # Without a service model every process model starts straight away
        for roots in model.models.values():
            for key in roots:
                add_token(state, root_activation(state, model.entities[key].model), key)
    logger.info(f"initialised '{model.name}' with seed {seed}, {len(scenario.injections)} injection(s)")
    return state


# --- starting entities ---

def _can_start_now(state: EngineState, execution: Execution) -> bool:
    if state.exclusive is not None and state.exclusive != execution.id:
        return inside(state, execution, state.exclusive)
    if state.quiescing is not None and state.quiescing != execution.id:
        return False
    return True


def _running_atomic(state: EngineState, exclude: int) -> list[Execution]:
    return [
        e for e in state.live()
        if e.id != exclude and e.status in (Status.RUNNING, Status.SUSPENDED) and e.child is None
    ]


def quiesce_for_exclusive(state: EngineState, execution: Execution) -> bool:
    """Hold new starts until no atomic execution runs. True once the exclusive process may start."""
    running = _running_atomic(state, execution.id)
    if not running:
        return True
    if state.quiescing != execution.id:
        state.quiescing = execution.id
        names = sorted(state.model.entities[e.entity].name for e in running)
        emit(state, TraceKind.QUIESCE, [state.model.entities[execution.entity].name], running=names)
    return False


def _abort_waiting(state: EngineState, execution: Execution, entity: Entity, reason: str) -> None:
    execution.status = Status.ABORTED
    recovery.rollback(state, entity.name, reason)


def _try_start(state: EngineState, execution: Execution) -> bool:
    """Attempt to start a waiting execution. True when anything changed."""
    entity = state.model.entities[execution.entity]
    if not _can_start_now(state, execution):
        return False
    if entity.exclusive and _running_atomic(state, execution.id):
        if state.quiescing == execution.id:
            return False
        quiesce_for_exclusive(state, execution)
        return True

    activation = state.activations[execution.activation]
    if state.armed_failures.get(entity.name, 0) > 0:
        state.armed_failures[entity.name] -= 1
        execution.status = Status.ABORTED
        recovery.register_failure(state, activation, entity.key, execution.role, execution.substitutes)
        return True

    bindings = bindings_for(state, entity, execution, starting=True)
    if not eval_condition(entity.pre, state.snapshot, state.temporal, bindings):
        # A false pre-condition waits; it is re-checked on every step until the deadline
        if execution.deadline is None:
            execution.deadline = state.clock + (entity.timeout or settings.precondition_timeout)
        if state.clock < execution.deadline:
            return False
        if uses_temporal(entity.pre):
            emit(state, TraceKind.TEMPORAL_VIOLATION, [entity.name], constraint=format_expr(entity.pre), phase="pre")
            _abort_waiting(state, execution, entity, "temporal pre-condition violated")
        else:
            _abort_waiting(state, execution, entity, "pre-condition still false at timeout")
        return True

    for m in entity.receives:
        if m.buffer is not None and not get_buffer(state, m.buffer).has({m.message}):
            return False

    _start(state, execution, entity)
    return True


def _start(state: EngineState, execution: Execution, entity: Entity) -> None:
    execution.status = Status.RUNNING
    execution.started = state.clock
    execution.deadline = None
    state.temporal.record_start(entity.name, state.clock)
    emit(
        state, TraceKind.ENTITY_STARTED, [entity.name],
        exec=execution.id, role=execution.role,
        substitutes=state.model.entities[execution.substitutes].name if execution.substitutes else None,
    )
    if entity.kind is EntityKind.PROCESS:
        enqueue_event(state, Event("process_start", entity.name))
    if entity.exclusive:
        state.exclusive = execution.id
        state.quiescing = None

    for m in entity.receives:
        if m.buffer is None:
            continue
        envelope = take_message(state, entity, m.buffer, m.message)
        execution.received[m.message] = envelope.records

    execution.sync_index = 0
    _next_sync(state, execution, entity)


def _next_sync(state: EngineState, execution: Execution, entity: Entity) -> None:
    if execution.sync_index < len(entity.syncs):
        call = entity.syncs[execution.sync_index]
        send_message(state, execution, call.send, execution.received.get(call.send) or [{}], call.counterpart, "sync", call)
        return
    execution.status = Status.RUNNING
    _begin_work(state, execution, entity)


def _begin_work(state: EngineState, execution: Execution, entity: Entity) -> None:
    if entity.kind is EntityKind.PROCESS and entity.is_composite:
        body = state.model.entities[entity.body]
        child = Activation(state.new_id(), body.key, entity.model, owner=execution.id, role=execution.role)
        state.activations[child.id] = child
        execution.child = child.id
        for key in body.initial:
            add_token(state, child, key, execution.role)
        if not body.initial:
            execution.due = state.clock
        return
    execution.due = state.clock + entity.duration


# --- messaging ---

def send_message(
    state: EngineState,
    execution: Execution,
    message: str,
    records: list[dict],
    counterpart: Counterpart,
    mode: str = "async_out",
    call: SyncCall | None = None,
) -> EngineState:
    """Route a message for an execution; a synchronous send suspends it until the reply."""
    entity = state.model.entities[execution.entity]
    if mode == "async_in":
        if counterpart.kind != "buffer":
            raise ProtocolViolation(f"'{entity.name}' can only take '{message}' from a buffer")
        envelope = take_message(state, entity, counterpart.name, message)
        if envelope is None:
            execution.status = Status.WAITING
        else:
            execution.received[message] = envelope.records
        return state
    if mode != "sync":
        route_message(state, entity, message, records, counterpart)
        return state

    if call is None or not call.send_first:
        raise ProtocolViolation(f"'{entity.name}' waits on a synchronous reply it never asked for")
    if counterpart.kind == "buffer":
        raise ProtocolViolation(f"synchronous exchange of '{entity.name}' cannot target a buffer")
    target = Counterpart("buffer", call.out_buffer) if call.out_buffer else counterpart
    route_message(state, entity, message, records, target)
    execution.status = Status.SUSPENDED
    execution.awaiting = call.receive
    if counterpart.kind == "remote":
        replies = state.scenario.replies.get(counterpart.name, [])
        used = state.replies_used.get(counterpart.name, 0)
        if used < len(replies):
            reply = replies[used]
            state.replies_used[counterpart.name] = used + 1
            state.pending_replies.append(PendingReply(
                state.clock + reply.delay, execution.id, counterpart.name, reply.message, reply.records,
            ))
        else:
            logger.warning(f"no scripted reply left for '{counterpart.name}'; '{entity.name}' stays suspended")
    return state


def _resume(state: EngineState, execution: Execution, message: str, records: list[dict]) -> None:
    if execution.awaiting is None:
        raise ProtocolViolation(f"execution {execution.id} received a reply it did not wait for")
    entity = state.model.entities[execution.entity]
    execution.received[message] = records
    execution.awaiting = None
    execution.sync_index += 1
    execution.status = Status.RUNNING
    _next_sync(state, execution, entity)


def _resume_one(state: EngineState) -> bool:
    due = sorted((r for r in state.pending_replies if r.due <= state.clock), key=lambda r: (r.due, r.exec_id))
    if due:
        reply = due[0]
        state.pending_replies.remove(reply)
        execution = state.executions[reply.exec_id]
        records = [_coerce_record(state, reply.message, r) for r in reply.records]
        state.temporal.record_receive(reply.message, state.clock)
        emit(state, TraceKind.MESSAGE_RECEIVED, [reply.service, state.model.entities[execution.entity].name, reply.message])
        _resume(state, execution, reply.message, records)
        return True

    for execution in sorted(state.live(), key=lambda e: e.id):
        if execution.status is not Status.SUSPENDED or execution.awaiting is None:
            continue
        entity = state.model.entities[execution.entity]
        call = entity.syncs[execution.sync_index]
        if call.in_buffer and get_buffer(state, call.in_buffer).has({call.receive}):
            envelope = take_message(state, entity, call.in_buffer, call.receive)
            _resume(state, execution, call.receive, envelope.records)
            return True
    return False


# --- completion ---

def _commit_group(state: EngineState, activation: Activation, key: str):
    return next(
        (g for g in state.model.commit_groups if g.owner == activation.body and key in g.members), None,
    )


def _journal(state: EngineState, execution: Execution, entity: Entity, deltas, activation: Activation) -> bool:
    group = _commit_group(state, activation, entity.key) if entity.kind is EntityKind.PROCESS else None
    state.journal.record(JournalEntry(
        execution.id, entity.key, entity.name, execution.started, state.clock, list(deltas),
        committed=group is None, group=group.name if group else None,
        is_decision=entity.kind is EntityKind.DECISION,
    ))
    if group is None:
        return True
    done = activation.groups.setdefault(group.name, [])
    done.append(execution.id)
    finished = {state.executions[i].entity for i in done}
    if set(group.members) <= finished:
        state.journal.commit(set(done))
        emit(state, TraceKind.COMMIT, [group.name], members=[state.model.entities[k].name for k in group.members])
        activation.groups[group.name] = []
    return False


def _complete(state: EngineState, execution: Execution) -> None:
    entity = state.model.entities[execution.entity]
    activation = state.activations[execution.activation]
    bindings = bindings_for(state, entity, execution)
    execution.due = None

    outcome = None
    if entity.kind is EntityKind.DECISION:
        outcome = evaluate_decision(state, entity.key, execution)
        if outcome == ABORT:
            execution.status = Status.ABORTED
            state.temporal.discard_open(entity.name)
            recovery.rollback(state, entity.name, "no decision rule holds")
            return

    try:
        deltas = perform(state, entity, execution, bindings)
    except ExpressionError as e:
        execution.status = Status.ABORTED
        state.temporal.discard_open(entity.name)
        recovery.rollback(state, entity.name, str(e))
        return

    state.temporal.record_end(entity.name, state.clock)
    if entity.post is not None and not _post_holds(state, entity, execution):
        if uses_temporal(entity.post):
            emit(state, TraceKind.TEMPORAL_VIOLATION, [entity.name], constraint=format_expr(entity.post), phase="post")
        execution.status = Status.ABORTED
        state.journal.record(JournalEntry(
            execution.id, entity.key, entity.name, execution.started, state.clock, list(deltas),
        ))
        recovery.rollback(state, entity.name, "post-condition violated")
        return

    committed = _journal(state, execution, entity, deltas, activation)
    execution.status = Status.DONE
    execution.outcome = outcome
    emit(state, TraceKind.ENTITY_COMPLETED, [entity.name], exec=execution.id, outcome=outcome, committed=committed)
    if deltas:
        enqueue_event(state, Event("db_state"))
    if entity.kind is EntityKind.PROCESS:
        enqueue_event(state, Event("process_end", entity.name))
    if state.exclusive == execution.id:
        state.exclusive = None

    source = execution.substitutes or entity.key
    deliver_triggers(state, activation, source, outcome, execution.role)
    settle(state, activation)


def _post_holds(state: EngineState, entity: Entity, execution: Execution) -> bool:
    """The entity has run, so a missing temporal fact here is an error, not a false condition."""
    bindings = bindings_for(state, entity, execution)
    if is_temporal_only(entity.post):
        return check_temporal(entity.post, state.temporal, bindings)
    return eval_predicate(entity.post, state.snapshot, state.temporal, bindings)


def _complete_one(state: EngineState) -> bool:
    due = [e for e in state.live() if e.status is Status.RUNNING and e.due is not None and e.due <= state.clock]
    if not due:
        return False
    _complete(state, min(due, key=lambda e: (e.due, e.id)))
    return True


# --- synchronisers and tokens ---

def _fire_synchroniser(state: EngineState) -> bool:
    for activation in sorted(state.activations.values(), key=lambda a: a.id):
        if activation.closed and activation.owner is not None:
            continue
        for key, counts in activation.sync_tokens.items():
            if not sync_ready(state, key, counts):
                continue
            for s in {t.source for t in state.model.incoming(key)}:
                counts[s] -= 1
            entity = state.model.entities[key]
            exec_id = state.new_id()
            state.executions[exec_id] = Execution(
                exec_id, key, activation.id, Status.DONE, activation.role, started=state.clock,
            )
            emit(state, TraceKind.ENTITY_STARTED, [entity.name], exec=exec_id)
            emit(state, TraceKind.ENTITY_COMPLETED, [entity.name], exec=exec_id)
            deliver_triggers(state, activation, key, None, activation.role)
            settle(state, activation)
            return True
    return False


def _start_one(state: EngineState) -> bool:
    for execution in sorted(state.live(), key=lambda e: e.id):
        if execution.status is Status.WAITING and _try_start(state, execution):
            return True

    for activation in sorted(state.activations.values(), key=lambda a: a.id):
        if activation.closed or not activation.tokens:
            continue
        token: Token = activation.tokens.pop(0)
        exec_id = state.new_id()
        execution = Execution(
            exec_id, token.entity, activation.id, role=token.role, substitutes=token.substitutes,
            received=dict(token.received), retry=token.retry,
        )
        state.executions[exec_id] = execution
        _try_start(state, execution)
        settle(state, activation)
        return True
    return False


# --- time ---

def _coerce_record(state: EngineState, message: str, record: dict) -> dict:
    schema = state.model.message_schema(message)
    return {k: coerce(v, schema[k]) if k in schema else v for k, v in record.items()}


def _consume(state: EngineState, record: ScenarioRecord) -> None:
    state.injection_cursor += 1
    if record.kind == "message":
        payload = record.payload if isinstance(record.payload, list) else [record.payload or {}]
        arrive(state, record.target, [_coerce_record(state, record.target, r) for r in payload], "environment")
    elif record.kind == "f_abort":
        count = (record.payload or {}).get("count", 1) if isinstance(record.payload, dict) else 1
        recovery.inject_failure(state, record.target, count)
    elif record.kind == "nf_abort":
        recovery.rollback(state, record.target or "environment", "injected")


def _advance(state: EngineState) -> bool:
    candidates = []
    injection = state.scenario.injections[state.injection_cursor] if state.pending_injections else None
    if injection is not None:
        candidates.append(injection.t)
    for e in state.live():
        if e.status is Status.RUNNING and e.due is not None and e.due > state.clock:
            candidates.append(e.due)
        if e.status is Status.WAITING and e.deadline is not None and e.deadline > state.clock:
            candidates.append(e.deadline)
    candidates += [r.due for r in state.pending_replies]
    deadline = overstay_deadline(state)
    if deadline is not None and deadline > state.clock:
        candidates.append(deadline)
    if not candidates:
        return False

    state.clock = max(state.clock, min(candidates))
    if injection is not None and injection.t <= state.clock:
        _consume(state, injection)
    check_overstay(state)
    check_timers(state)
    return True


# --- public operations ---

def _dispatch_one(state: EngineState) -> bool:
    if not state.events:
        return False
    dispatch_eca(state, state.events.popleft())
    return True


def step(state: EngineState) -> tuple[EngineState, list[TraceEntry]]:
    if state.done:
        raise EngineError("the service instance is already dead")
    mark = len(state.trace)
    state.step_count += 1

    progressed = (
        _resume_one(state)
        or _complete_one(state)
        or _dispatch_one(state)
        or _fire_synchroniser(state)
        or _start_one(state)
        or _advance(state)
    )
    if not progressed:
        raise StuckState(
            f"no runnable work in state '{state_label(state.service.state)}' at clock {state.clock}",
            state, state.trace.entries,
        )
    return state, state.trace.since(mark)


def run(state: EngineState, max_steps: int | None = None) -> tuple[EngineState, list[TraceEntry]]:
    """Step until death. StuckState and BudgetExhausted carry the state and trace so far."""
    max_steps = settings.max_steps if max_steps is None else max_steps
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    logger.info(f"simulation of '{state.model.name}' started (seed {state.seed})")
    taken = 0
    while not state.done:
        if taken >= max_steps:
            raise BudgetExhausted(f"step budget of {max_steps} exhausted at clock {state.clock}", state, state.trace.entries)
        step(state)
        taken += 1
    logger.info(f"simulation terminated after {state.step_count} steps at clock {state.clock}")
    return state, state.trace.entries


def summarize(state: EngineState) -> dict:
    """Final service state (the one death was entered from), steps, clock, trace and execution counts."""
    final = state.service.state
    if final == DEATH and state.service.history:
        final = state.service.history[-1][0]
    counts: dict[str, int] = {}
    for entry in state.trace.entries:
        counts[entry.kind.value] = counts.get(entry.kind.value, 0) + 1
    return {
        "final_state": state_label(final),
        "terminated": state.done,
        "steps": state.step_count,
        "clock": state.clock,
        "trace": dict(sorted(counts.items())),
        "executions": state.temporal.execution_counts(),
    }

