"""Simple and complex decision evaluation."""

from __future__ import annotations

import logging
from collections import deque

from btw.config import settings
from btw.engine.runtime import bindings_for, emit, enqueue_event
from btw.engine.state import EngineState, Execution
from btw.engine.trace import TraceKind
from btw.errors import StuckDecision
from btw.expr.evaluator import eval_condition
from btw.models import Entity, EntityKind, Event

logger = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"
ABORT = "abort"


def _occurrence(state: EngineState, entity: Entity) -> int:
    count = state.decision_occurrences.get(entity.name, 0) + 1
    state.decision_occurrences[entity.name] = count
    return count


def _simple(state: EngineState, entity: Entity, execution: Execution | None, occurrence: int) -> tuple[str, str]:
    bindings = bindings_for(state, entity, execution)
    holds = {
        outcome: entity.rules.get(outcome) is not None
        and eval_condition(entity.rules[outcome], state.snapshot, state.temporal, bindings)
        for outcome in (POSITIVE, NEGATIVE)
    }
    if holds[POSITIVE] != holds[NEGATIVE]:
        return (POSITIVE if holds[POSITIVE] else NEGATIVE), "rule"
    if not holds[POSITIVE]:
        return ABORT, "none"
    override = state.scenario.override_for(entity.name, occurrence)
    if override is not None:
        return override, "override"
    return state.rng.choice((POSITIVE, NEGATIVE)), "draw"


def _network(state: EngineState, entity: Entity, execution: Execution | None) -> tuple[str, str]:
    """Breadth-first run of the sub-decision network in declaration and trigger order."""
    model = state.model
    queue = deque(entity.initial)
    sync_tokens: dict[str, dict[str, int]] = {}
    terminal: list[str] = []
    evaluated = 0

    def push(source: str, outcome: str | None) -> None:
        for trigger in model.outgoing(source, outcome):
            target = model.entities[trigger.target]
            if target.kind is not EntityKind.SYNC:
                queue.append(target.key)
                continue
            counts = sync_tokens.setdefault(target.key, {})
            counts[source] = counts.get(source, 0) + 1
            sources = {t.source for t in model.incoming(target.key)}
            if all(counts.get(s, 0) > 0 for s in sources):
                for s in sources:
                    counts[s] -= 1
                queue.append(target.key)

    while queue:
        node = model.entities[queue.popleft()]
        if node.kind is EntityKind.SYNC:
            push(node.key, None)
            continue
        evaluated += 1
        if evaluated > settings.network_limit:
            raise StuckDecision(f"decision network of '{entity.name}' exceeded {settings.network_limit} evaluations")

        outcome = evaluate_decision(state, node.key, execution)
        if outcome == ABORT:
            return ABORT, f"stuck:{node.name}"
        if outcome in node.aborts:
            return node.aborts[outcome], f"abort:{node.name}"
        if outcome in node.terminates or not model.outgoing(node.key, outcome):
            terminal.append(outcome)
            continue
        push(node.key, outcome)

    if entity.combine == "any":
        result = POSITIVE if POSITIVE in terminal else NEGATIVE
    else:
        result = POSITIVE if terminal and all(o == POSITIVE for o in terminal) else NEGATIVE
    return result, f"combine:{entity.combine}"


def evaluate_decision(state: EngineState, key: str, execution: Execution | None = None) -> str:
    """Outcome of a decision: positive, negative or abort when no rule holds."""
    entity = state.model.entities[key]
    occurrence = _occurrence(state, entity)
    if entity.children:
        try:
            outcome, via = _network(state, entity, execution)
        except StuckDecision as e:
            logger.warning(str(e))
            outcome, via = ABORT, "limit"
    else:
        outcome, via = _simple(state, entity, execution, occurrence)

    emit(state, TraceKind.DECISION_OUTCOME, [entity.name], outcome=outcome, via=via, occurrence=occurrence)
    if outcome != ABORT:
        enqueue_event(state, Event("decision_end", entity.name, outcome))
    return outcome
