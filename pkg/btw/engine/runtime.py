"""Primitives shared by the scheduler, decisions, ECA rules and recovery:
bindings, tokens, message routing, action execution and cancellation."""

from __future__ import annotations

import logging

from btw.dsl.lower import inbox_buffer, link_buffer
from btw.engine.buffers import Envelope, MessageBuffer, protocol_of
from btw.engine.state import LIVE, Activation, EngineState, Execution, Status, Token
from btw.engine.trace import TraceKind
from btw.expr.actions import MessageOut, deltas_of, exec_action
from btw.expr.ast import Counterpart
from btw.expr.evaluator import Bindings, eval_predicate
from btw.expr.snapshot import Delta
from btw.errors import ExpressionError
from btw.models import Entity, EntityKind, Event, MessagingMode

logger = logging.getLogger(__name__)


def emit(state: EngineState, kind: TraceKind, subject, /, **detail):
    return state.trace.emit(state.clock, kind, subject, **detail)


def bindings_for(state: EngineState, entity: Entity, execution: Execution | None = None, starting: bool = False) -> Bindings:
    scopes: dict[str, str] = {}
    for key in [entity.key, *state.model.ancestors(entity.key)]:
        for name in state.model.entities[key].locvar:
            scopes.setdefault(name, key)
    return Bindings(
        var_scopes=scopes,
        messages=dict(execution.received) if execution else {},
        clock=state.clock,
        entity=entity.name,
        starting=entity.name if starting else None,
        is_decision=entity.kind is EntityKind.DECISION,
        temporal=state.temporal,
    )


def service_bindings(state: EngineState) -> Bindings:
    return Bindings(
        messages={name: env.records for name, env in state.arrivals.items()},
        clock=state.clock,
        temporal=state.temporal,
    )


# --- events ---

def could_match(state: EngineState, event: Event) -> bool:
    service = state.model.service
    if service is None:
        return False
    return any(
        t.event.kind == event.kind and (t.event.subject is None or t.event.subject == event.subject)
        for t in service.transitions
    )


def enqueue_event(state: EngineState, event: Event) -> None:
    if could_match(state, event):
        state.events.append(event)


# --- activations and tokens ---

def root_activation(state: EngineState, model: str) -> Activation:
    if model not in state.roots:
        activation = Activation(state.new_id(), None, model)
        state.activations[activation.id] = activation
        state.roots[model] = activation.id
    return state.activations[state.roots[model]]


def activation_for(state: EngineState, key: str) -> Activation:
    """Newest open instance of the entity's decomposition, else its model's root."""
    entity = state.model.entities[key]
    if entity.parent is not None:
        for activation in sorted(state.activations.values(), key=lambda a: -a.id):
            if not activation.closed and activation.body == entity.parent:
                return activation
    return root_activation(state, entity.model)


def add_token(
    state: EngineState,
    activation: Activation,
    key: str,
    role: str | None = None,
    substitutes: str | None = None,
    retry: bool = False,
    received: dict | None = None,
) -> Token:
    entity = state.model.entities[key]
    token = Token(key, entity.role or role, substitutes, retry, dict(received or {}))
    activation.tokens.append(token)
    return token


def deliver_triggers(state: EngineState, activation: Activation, source: str, outcome: str | None, role: str | None) -> None:
    for trigger in state.model.outgoing(source, outcome):
        target = state.model.entities[trigger.target]
        if target.kind is EntityKind.SYNC:
            counts = activation.sync_tokens.setdefault(target.key, {})
            counts[source] = counts.get(source, 0) + 1
        else:
            add_token(state, activation, target.key, role)


def sync_ready(state: EngineState, key: str, counts: dict[str, int]) -> bool:
    """AND-join: every incoming trigger has delivered at least one token."""
    sources = {t.source for t in state.model.incoming(key)}
    return bool(sources) and all(counts.get(s, 0) > 0 for s in sources)


def activation_live(state: EngineState, activation: Activation) -> bool:
    if activation.tokens or any(sync_ready(state, k, c) for k, c in activation.sync_tokens.items()):
        return True
    return any(e.activation == activation.id and e.status in LIVE for e in state.executions.values())


def settle(state: EngineState, activation: Activation) -> None:
    """Close a quiescent decomposition instance and let its owner complete."""
    if activation.owner is None or activation.closed or activation_live(state, activation):
        return
    activation.closed = True
    stranded = {k: v for k, v in activation.sync_tokens.items() if any(v.values())}
    if stranded:
        names = ", ".join(state.model.entities[k].name for k in stranded)
        logger.warning(f"synchroniser token(s) stranded at {names} when activation {activation.id} closed")
    owner = state.executions[activation.owner]
    if owner.status is Status.RUNNING:
        owner.due = state.clock


def inside(state: EngineState, execution: Execution, owner: int) -> bool:
    """True when the execution runs somewhere below the given composite execution."""
    activation = state.activations.get(execution.activation)
    while activation is not None and activation.owner is not None:
        if activation.owner == owner:
            return True
        parent = state.executions[activation.owner]
        activation = state.activations.get(parent.activation)
    return False


# --- buffers and messages ---

def get_buffer(state: EngineState, name: str) -> MessageBuffer:
    if name not in state.buffers:
        info = state.model.buffers.get(name)
        state.buffers[name] = MessageBuffer(name, protocol_of(info.protocol) if info else "fifo")
    return state.buffers[name]


def buffer_predicate(state: EngineState, name: str):
    info = state.model.buffers.get(name)
    if info is None or info.predicate is None:
        return None
    bindings = Bindings(clock=state.clock, temporal=state.temporal)

    def holds(envelope: Envelope) -> bool:
        try:
            return eval_predicate(info.predicate, state.snapshot, state.temporal, bindings.bind("m", envelope.record))
        except ExpressionError:
            return False

    return holds


def take_message(state: EngineState, entity: Entity, buffer: str, message: str) -> Envelope | None:
    envelope = get_buffer(state, buffer).take(state.rng, {message}, buffer_predicate(state, buffer))
    if envelope is not None:
        state.temporal.record_receive(message, state.clock)
        emit(state, TraceKind.BUFFER_TAKE, [entity.name, buffer, message], records=len(envelope.records))
    return envelope


def _resolve_entity(state: EngineState, sender: Entity, name: str) -> Entity | None:
    if name in state.model.entities:
        return state.model.entities[name]
    parent = state.model.entities[sender.parent] if sender.parent else None
    siblings = parent.children if parent else state.model.models.get(sender.model, [])
    for key in siblings:
        if state.model.entities[key].name == name:
            return state.model.entities[key]
    return state.model.find(name)


def route_message(state: EngineState, sender: Entity, message: str, records: list[dict], counterpart: Counterpart) -> None:
    """Deliver an outgoing message to a buffer, a sibling entity or the environment."""
    envelope = Envelope(message, records, sender.key, state.clock)
    if counterpart.kind == "buffer":
        get_buffer(state, counterpart.name).put(envelope)
        emit(state, TraceKind.BUFFER_PUT, [sender.name, counterpart.name, message])
        return
    if counterpart.kind == "entity":
        receiver = _resolve_entity(state, sender, counterpart.name)
        if receiver is None:
            raise ExpressionError(f"'{sender.name}' sends '{message}' to unknown entity '{counterpart.name}'")
        buffer = link_buffer(sender.key, receiver.key)
        get_buffer(state, buffer).put(envelope)
        emit(state, TraceKind.BUFFER_PUT, [sender.name, buffer, message])
        return

    destination = "service" if counterpart.kind == "service" else counterpart.name
    state.temporal.record_send(message, state.clock)
    emit(state, TraceKind.MESSAGE_SENT, [sender.name, destination, message], records=len(records))
    enqueue_event(state, Event("msg_to", message))


def arrive(state: EngineState, message: str, records: list[dict], origin: str) -> Envelope:
    """A message reaches the local service from the environment."""
    envelope = Envelope(message, records, origin, state.clock)
    state.arrivals[message] = envelope
    state.temporal.record_receive(message, state.clock)
    emit(state, TraceKind.MESSAGE_RECEIVED, [origin, message], records=len(records))
    inbox = inbox_buffer(message)
    if inbox in state.model.buffers:
        get_buffer(state, inbox).put(envelope)
    enqueue_event(state, Event("msg_from", message))
    return envelope


# --- actions ---

def perform(state: EngineState, entity: Entity, execution: Execution | None, bindings: Bindings) -> list[Delta]:
    """Run the action block, then the declared sends the block did not already make."""
    snapshot, effects = exec_action(entity.action, state.snapshot, bindings, state.temporal)
    state.snapshot = snapshot
    sent = set()
    for effect in effects:
        if isinstance(effect, MessageOut):
            sent.add(effect.message)
            route_message(state, entity, effect.message, [effect.payload], effect.target)
    for m in entity.sends:
        if m.mode is MessagingMode.ASYNC_OUT and m.message not in sent:
            received = bindings.messages.get(m.message)
            records = [dict(r) for r in received] if received else [{}]
            target = Counterpart("buffer", m.buffer) if m.buffer else m.counterpart
            route_message(state, entity, m.message, records, target)
    return deltas_of(effects)


def cancel_all(state: EngineState) -> None:
    """Abort every live execution and empty every decomposition instance."""
    for execution in state.live():
        if execution.started is not None:
            state.temporal.discard_open(state.model.entities[execution.entity].name)
        execution.status = Status.ABORTED
    for activation in state.activations.values():
        activation.tokens.clear()
        activation.sync_tokens.clear()
        if activation.owner is not None:
            activation.closed = True
    state.pending_replies.clear()
    state.quiescing = None
    state.exclusive = None
