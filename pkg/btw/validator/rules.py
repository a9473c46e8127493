"""Well-formedness checks over a lowered workflow model, one function per code."""

from __future__ import annotations

import logging
from collections import defaultdict, deque

from btw.dsl.parser import BIRTH, DEATH
from btw.errors import Diagnostic, NO_SPAN, Severity, SourceSpan
from btw.expr.ast import SendEachStmt, SendStmt, WRITE_STATEMENTS
from btw.metamodel.registry import ConceptRegistry, check_allocation_axiom
from btw.models import Entity, EntityKind, WorkflowModel
from btw.validator.codes import CODES

logger = logging.getLogger(__name__)

ENTITY_EVENTS = {
    "decision_end": {EntityKind.DECISION},
    "process_start": {EntityKind.PROCESS},
    "process_end": {EntityKind.PROCESS},
    "process_start_failed": {EntityKind.PROCESS},
}


def _diag(code: str, message: str, span: SourceSpan = NO_SPAN, subject: tuple[str, ...] = ()) -> Diagnostic:
    info = CODES[code]
    return Diagnostic(code, info.severity, message, span, subject, info.anchor)


def _state_name(state: str) -> str:
    return {BIRTH: "birth", DEATH: "death"}.get(state, f"'{state}'")


def check_partition(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    kinds: dict[str, list[Entity]] = defaultdict(list)
    for entity in model.entities.values():
        kinds[entity.name].append(entity)
    result = []
    for name, entities in kinds.items():
        first = entities[0]
        other = next((e for e in entities if e.kind is not first.kind), None)
        if other is not None:
            result.append(_diag(
                "V001",
                f"'{name}' is declared both as {first.kind.value} and as {other.kind.value}",
                other.span, (name,),
            ))
    return result


def check_roots(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for name, roots in model.models.items():
        if len(roots) != 1:
            span = model.entities[roots[1]].span if len(roots) > 1 else NO_SPAN
            result.append(_diag("V002", f"model '{name}' has {len(roots)} top-level entities, expected one", span, (name,)))
    for entity in model.entities.values():
        if entity.children and not entity.initial:
            result.append(_diag(
                "V002", f"decomposition of '{entity.name}' has no initial entity", entity.span, (entity.name,),
            ))
    return result


def check_trigger_locality(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for trigger in model.triggers:
        source = model.entities[trigger.source]
        target = model.entities[trigger.target]
        if not (source.parent == target.parent == trigger.declared_in):
            result.append(_diag(
                "V003",
                f"trigger '{source.name}' -> '{target.name}' crosses a decomposition boundary",
                trigger.span, (source.name, target.name),
            ))
    return result


def check_messaging_locality(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        links = [(m.counterpart, m.span) for m in entity.receives + entity.sends]
        links += [(s.counterpart, s.span) for s in entity.syncs]
        for counterpart, span in links:
            if counterpart.kind != "entity":
                continue
            other = model.entities[counterpart.name]
            if other.parent != entity.parent:
                result.append(_diag(
                    "V004",
                    f"'{entity.name}' exchanges messages with '{other.name}' outside its decomposition",
                    span, (entity.name, other.name),
                ))
    return result


def check_decision_bodies(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        if entity.kind is not EntityKind.DECISION:
            continue
        for key in entity.children:
            child = model.entities[key]
            if child.kind is EntityKind.PROCESS:
                result.append(_diag(
                    "V005",
                    f"decision '{entity.name}' decomposes into process '{child.name}'",
                    child.span, (entity.name, child.name),
                ))
        if any(isinstance(stmt, WRITE_STATEMENTS) for stmt in entity.action):
            result.append(_diag("V005", f"decision '{entity.name}' performs a write action", entity.span, (entity.name,)))
    return result


def check_names(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    return [
        _diag("V006", f"'{name}' is declared twice in '{owner}'", span, (name,))
        for name, owner, span in model.duplicate_names
    ]


def check_variable_scopes(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        for name in sorted(set(entity.locvar) & set(entity.locse)):
            result.append(_diag(
                "V007",
                f"'{name}' in '{entity.name}' is both a local variable and a storage entity",
                entity.locvar[name].span, (entity.name, name),
            ))
    return result


def check_buffer_scope(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        parent = model.entities[entity.parent] if entity.parent else None
        local = parent.locse if parent else []
        for m in entity.receives + entity.sends:
            if m.counterpart.kind == "buffer" and m.buffer not in local:
                result.append(_diag(
                    "V008",
                    f"buffer '{m.buffer}' used by '{entity.name}' is not local to its decomposition",
                    m.span, (entity.name, m.buffer),
                ))
    return result


def check_buffer_allocation(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        for m in entity.receives + entity.sends:
            if m.counterpart.kind != "buffer":
                continue
            holds = model.buffers[m.buffer].holds
            if holds and m.message not in holds:
                result.append(_diag(
                    "V009",
                    f"buffer '{m.buffer}' is not allocated message type '{m.message}'",
                    m.span, (m.buffer, m.message),
                ))
    return result


def _action_targets(entity: Entity):
    for stmt in entity.action:
        if isinstance(stmt, (SendStmt, SendEachStmt)):
            yield stmt.target, stmt.span


def check_remote_messaging(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for entity in model.entities.values():
        for m in entity.receives:
            if m.counterpart.kind == "remote":
                result.append(_diag(
                    "V010",
                    f"'{entity.name}' receives '{m.message}' directly from remote service "
                    f"'{m.counterpart.name}'; remote messages arrive through the local service",
                    m.span, (entity.name, m.counterpart.name),
                ))
        targets = [(m.counterpart, m.span) for m in entity.sends]
        targets += [(s.counterpart, s.span) for s in entity.syncs]
        targets += list(_action_targets(entity))
        for counterpart, span in targets:
            if counterpart.kind == "remote" and counterpart.name not in model.services:
                result.append(_diag(
                    "V010",
                    f"'{entity.name}' messages '{counterpart.name}', which is not a declared service",
                    span, (entity.name, counterpart.name),
                ))
    return result


def check_send_first(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    return [
        _diag(
            "V011",
            f"synchronous exchange of '{entity.name}' receives '{call.receive}' before sending '{call.send}'",
            call.span, (entity.name,),
        )
        for entity in model.entities.values()
        for call in entity.syncs
        if not call.send_first
    ]


def _reachable(edges: dict[str, set[str]], start: str) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in sorted(edges.get(node, ())):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def check_service_reachability(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    service = model.service
    if service is None:
        return []
    forward: dict[str, set[str]] = defaultdict(set)
    backward: dict[str, set[str]] = defaultdict(set)
    for t in service.transitions:
        if t.target is not None and t.target in service.states and t.source in service.states:
            forward[t.source].add(t.target)
            backward[t.target].add(t.source)

    result = []
    from_birth = _reachable(forward, BIRTH)
    to_death = _reachable(backward, DEATH)
    for state in service.states:
        if state not in from_birth:
            result.append(_diag("V012", f"state {_state_name(state)} is unreachable from birth", service.span, (state,)))
        elif state not in to_death:
            result.append(_diag("V012", f"death is unreachable from state {_state_name(state)}", service.span, (state,)))
    for t in service.transitions:
        if t.target == BIRTH:
            result.append(_diag("V012", f"transition {t.id} enters birth", t.span, (t.id,)))
        if t.source == DEATH:
            result.append(_diag("V012", f"transition {t.id} leaves death", t.span, (t.id,)))
    return result


def check_eca_references(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    service = model.service
    if service is None:
        return []
    result = []

    def flag(t, message):
        result.append(_diag("V013", f"rule {t.id}: {message}", t.span, (t.id,)))

    for t in service.transitions:
        for state in (t.source, t.target):
            if state is not None and state not in service.states:
                flag(t, f"unknown state '{state}'")

        event = t.event
        if event.kind in ("msg_from", "msg_to") and event.subject not in model.messages:
            flag(t, f"{event.kind} names unknown message type '{event.subject}'")
        if event.kind in ENTITY_EVENTS:
            subject = model.find(event.subject)
            if subject is None:
                flag(t, f"{event.kind} names unknown entity '{event.subject}'")
            elif subject.kind not in ENTITY_EVENTS[event.kind]:
                flag(t, f"{event.kind} cannot observe {subject.kind.value} '{event.subject}'")
        if event.kind == "process_start_failed" and (event.threshold or 0) < 1:
            flag(t, "failure count must be positive")

        for action in t.actions:
            if action.message is not None and action.message not in model.messages:
                flag(t, f"action sends unknown message type '{action.message}'")
            if action.kind in ("forward", "trigger") and model.find(action.target) is None:
                flag(t, f"action targets unknown entity '{action.target}'")
            if action.kind == "send" and action.target not in model.services:
                flag(t, f"action sends to unknown service '{action.target}'")
    return result


def check_recovery(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for name, spec in model.recovery.items():
        def flag(message):
            result.append(_diag("V014", f"recovery of '{name}': {message}", spec.span, (name,)))

        subject = model.find(name)
        if subject is None:
            flag("no such entity")
            continue
        if subject.kind is EntityKind.DECISION and spec.rollback != "null":
            flag(f"decisions take no rollback, found '{spec.rollback}'")
        if spec.rollback == "compensate":
            if spec.compensate is None or model.find(spec.compensate) is None:
                flag(f"compensating entity '{spec.compensate}' does not exist")
            elif spec.compensate == name:
                flag("an entity cannot compensate itself")

        finite = [threshold for threshold, _ in spec.ladder if threshold is not None]
        if any(b <= a for a, b in zip(finite, finite[1:])) or any(t < 1 for t in finite):
            flag(f"contingency thresholds {finite} are not strictly increasing positive counts")
        unbounded = [i for i, (threshold, _) in enumerate(spec.ladder) if threshold is None]
        if len(unbounded) > 1:
            flag("more than one unbounded threshold")
        elif unbounded and unbounded[0] != len(spec.ladder) - 1:
            flag("the unbounded threshold must come last")
        for _, target in spec.ladder:
            if target is not None and model.find(target) is None:
                flag(f"contingency '{target}' does not exist")
    return result


def check_allocation(model: WorkflowModel, registry: ConceptRegistry, strict: bool | None = None) -> list[Diagnostic]:
    return check_allocation_axiom(registry, strict)


def check_org_forest(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    return [
        _diag("V016", f"'{child}' sub_of '{parent}' makes the organisation cyclic", span, (child, parent))
        for child, parent, span in model.rejected_suborgs
    ]


def check_store_nature(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    result = []
    for store in model.stores.values():
        natures = sorted({model.objtypes[t] for t in store.holds if t in model.objtypes})
        if len(natures) > 1:
            result.append(_diag(
                "V017", f"store '{store.name}' mixes material and informational object types", store.span, (store.name,),
            ))
        elif natures and store.nature and natures[0] != store.nature:
            result.append(_diag(
                "V017", f"{store.nature} store '{store.name}' holds {natures[0]} object types", store.span, (store.name,),
            ))
    return result


def check_exclusive(model: WorkflowModel, registry: ConceptRegistry) -> list[Diagnostic]:
    return [
        _diag("V018", f"{entity.kind.value} '{entity.name}' cannot be exclusive", entity.span, (entity.name,))
        for entity in model.entities.values()
        if entity.exclusive and entity.kind is not EntityKind.PROCESS
    ]


CHECKS = {
    "V001": check_partition,
    "V002": check_roots,
    "V003": check_trigger_locality,
    "V004": check_messaging_locality,
    "V005": check_decision_bodies,
    "V006": check_names,
    "V007": check_variable_scopes,
    "V008": check_buffer_scope,
    "V009": check_buffer_allocation,
    "V010": check_remote_messaging,
    "V011": check_send_first,
    "V012": check_service_reachability,
    "V013": check_eca_references,
    "V014": check_recovery,
    "V015": check_allocation,
    "V016": check_org_forest,
    "V017": check_store_nature,
    "V018": check_exclusive,
}


def validate(model: WorkflowModel, registry: ConceptRegistry, strict: bool | None = None) -> list[Diagnostic]:
    """Run every check in code order. An empty list means the model is well-formed."""
    diagnostics = []
    for code, check in CHECKS.items():
        if code == "V015":
            diagnostics.extend(check(model, registry, strict))
        else:
            diagnostics.extend(check(model, registry))
    errors = sum(d.is_error for d in diagnostics)
    logger.info(f"validated '{model.name}': {errors} error(s), {len(diagnostics) - errors} warning(s)")
    return diagnostics
