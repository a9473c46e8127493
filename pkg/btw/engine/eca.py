"""Event-condition-action dispatch over the service state machine."""

from __future__ import annotations

import logging

from btw.dsl.parser import BIRTH, DEATH
from btw.engine.runtime import activation_for, add_token, emit, enqueue_event, service_bindings
from btw.engine.state import EngineState
from btw.engine.trace import TraceKind
from btw.errors import ExpressionError
from btw.expr.evaluator import eval_condition
from btw.models import EcaAction, Event, Transition

logger = logging.getLogger(__name__)


def state_label(state: str) -> str:
    return {BIRTH: "birth", DEATH: "death"}.get(state, state)


def matches(engine: EngineState, rule: Event, event: Event) -> bool:
    if rule.kind != event.kind:
        return False
    if rule.subject is not None and rule.subject != event.subject:
        return False
    if rule.kind in ("decision_end", "abort") and rule.outcome != event.outcome:
        return False
    if rule.kind == "process_start_failed" and rule.threshold != event.threshold:
        return False
    if rule.expr is not None:
        return eval_condition(rule.expr, engine.snapshot, engine.temporal, service_bindings(engine))
    return True


def enter_state(engine: EngineState, target: str, rule: str, shadowed: list[str] | None = None) -> None:
    service = engine.service
    source = service.state
    emit(
        engine, TraceKind.STATE_TRANSITION, [state_label(source), state_label(target)],
        rule=rule, shadowed=shadowed or None,
    )
    service.history.append((source, target, rule, engine.clock))
    service.state = target
    service.entered_at = engine.clock
    service.overstay_reported = False
    engine.temporal.record_state(target, engine.clock)
    if target == DEATH:
        emit(engine, TraceKind.DEATH, [engine.model.service.name])
        engine.done = True
        logger.info(f"service '{engine.model.service.name}' reached death at clock {engine.clock}")


def _perform(engine: EngineState, action: EcaAction) -> None:
    if action.kind == "none":
        return
    target = engine.model.find(action.target) if action.kind in ("forward", "trigger") else None
    if action.kind in ("forward", "trigger"):
        if target is None:
            raise ExpressionError(f"ECA action names unknown entity '{action.target}'")
        received = {}
        if action.kind == "forward" and action.message in engine.arrivals:
            received[action.message] = engine.arrivals[action.message].records
        add_token(engine, activation_for(engine, target.key), target.key, received=received)
        return

    # send to another service
    arrival = engine.arrivals.get(action.message)
    records = arrival.records if arrival else [{}]
    engine.temporal.record_send(action.message, engine.clock)
    emit(engine, TraceKind.MESSAGE_SENT, [engine.model.service.name, action.target, action.message], records=len(records))
    enqueue_event(engine, Event("msg_to", action.message))


def dispatch_eca(engine: EngineState, event: Event) -> list[str]:
    """Fire the first matching rule leaving the current state; later matches are shadowed."""
    service = engine.model.service
    if service is None or engine.done:
        return []
    candidates: list[Transition] = []
    for t in service.outgoing(engine.service.state):
        if matches(engine, t.event, event) and eval_condition(
            t.condition, engine.snapshot, engine.temporal, service_bindings(engine)
        ):
            candidates.append(t)
    if not candidates:
        return []

    rule, shadowed = candidates[0], [t.id for t in candidates[1:]]
    if shadowed:
        logger.warning(f"rule {rule.id} fired on {event.kind}; shadowed: {', '.join(shadowed)}")
    if rule.target is not None:
        enter_state(engine, rule.target, rule.id, shadowed)
    elif shadowed:
        # action-only rule: the state stays put
        here = state_label(engine.service.state)
        emit(engine, TraceKind.STATE_TRANSITION, [here, here], rule=rule.id, shadowed=shadowed, stay=True)
    for action in rule.actions:
        _perform(engine, action)
    return [rule.id]


def check_timers(engine: EngineState) -> None:
    enqueue_event(engine, Event("timer"))


def check_overstay(engine: EngineState) -> None:
    service = engine.model.service
    if service is None or engine.service.overstay_reported:
        return
    limit = service.state_max.get(engine.service.state)
    if limit is not None and engine.clock > engine.service.entered_at + limit.total:
        engine.service.overstay_reported = True
        emit(engine, TraceKind.TEMPORAL_VIOLATION, [engine.service.state], max=limit, entered=engine.service.entered_at)


def overstay_deadline(engine: EngineState) -> int | None:
    service = engine.model.service
    if service is None or engine.service.overstay_reported:
        return None
    limit = service.state_max.get(engine.service.state)
    return engine.service.entered_at + limit.total + 1 if limit is not None else None
