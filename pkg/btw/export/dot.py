"""Graphviz rendering of a lowered model: decompositions as clusters, triggers as
solid edges, messaging as dashed edges, and the service state machine on its own."""

from __future__ import annotations

import logging

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from btw.config import TEMPLATES_DIR
from btw.dsl.parser import BIRTH, DEATH
from btw.models import Entity, EntityKind, WorkflowModel

logger = logging.getLogger(__name__)

SHAPES = {
    EntityKind.PROCESS: "box",
    EntityKind.DECISION: "diamond",
    EntityKind.SYNC: "circle",
}


def quote(text: str) -> str:
    # Backslashes pass through so labels can carry DOT line breaks
    text = str(text).replace('"', '\\"')
    # an odd run of trailing backslashes would escape the closing quote
    if (len(text) - len(text.rstrip("\\"))) % 2:
        text += "\\"
    return f'"{text}"'


_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)
_env.filters["q"] = quote


def _node(entity: Entity) -> dict:
    label = entity.name
    if entity.kind is EntityKind.PROCESS and entity.role:
        label += f"\\n[{entity.role}]"
    if entity.exclusive:
        label += "\\n(exclusive)"
    return {
        "id": entity.key,
        "label": label,
        "shape": SHAPES[entity.kind],
        "peripheries": 2 if entity.recursive_of else 1,
    }


def _cluster(model: WorkflowModel, entity: Entity) -> dict:
    nodes, clusters = [], []
    for key in entity.children:
        child = model.entities[key]
        if child.children and child.kind is EntityKind.PROCESS:
            clusters.append(_cluster(model, child))
        else:
            nodes.append(_node(child))
    return {"id": entity.key, "label": entity.name, "anchor": _node(entity), "nodes": nodes, "clusters": clusters}


def _messaging_edges(model: WorkflowModel) -> tuple[list[dict], list[dict]]:
    edges, endpoints = [], {}
    for entity in model.entities.values():
        flows = [(m.message, m.counterpart, True) for m in entity.sends]
        flows += [(m.message, m.counterpart, False) for m in entity.receives]
        flows += [(c.send, c.counterpart, True) for c in entity.syncs]
        for message, other, outgoing in flows:
            if other.kind == "entity":
                target = model.find(other.name)
                peer = target.key if target else other.name
            else:
                peer = f"{other.kind}:{other.name}"
                endpoints[peer] = {"id": peer, "label": other.name, "shape": _endpoint_shape(other.kind)}
            source, sink = (entity.key, peer) if outgoing else (peer, entity.key)
            edges.append({"source": source, "target": sink, "label": message})
    return edges, sorted(endpoints.values(), key=lambda e: e["id"])


def _endpoint_shape(kind: str) -> str:
    return {"buffer": "cylinder", "service": "component", "remote": "tab"}.get(kind, "plaintext")


def _service(model: WorkflowModel) -> dict | None:
    service = model.service
    if service is None:
        return None
    label = {BIRTH: "birth", DEATH: "death"}
    states = []
    for state in service.states:
        limit = service.state_max.get(state)
        states.append({
            "id": f"state:{state}",
            "label": label.get(state, state) + (f"\\nmax {limit.total}" if limit is not None else ""),
            "shape": "doublecircle" if state == DEATH else "point" if state == BIRTH else "ellipse",
        })
    transitions = []
    for t in service.transitions:
        if t.target is None:
            continue
        event = t.event.kind + (f" {t.event.subject}" if t.event.subject else "")
        if t.event.outcome:
            event += f" = {t.event.outcome}"
        transitions.append({
            "source": f"state:{t.source}", "target": f"state:{t.target}", "label": f"{t.id}: {event}",
        })
    return {"name": service.name, "states": states, "transitions": transitions}


def render_dot(model: WorkflowModel) -> str:
    """DOT source for `model`; the output is stable for a given model."""
    clusters, loose = [], []
    for roots in model.models.values():
        for key in roots:
            root = model.entities[key]
            if root.children:
                clusters.append(_cluster(model, root))
            else:
                loose.append(_node(root))

    triggers = []
    for t in model.triggers:
        triggers.append({"source": t.source, "target": t.target, "label": t.outcome or ""})
    messaging, endpoints = _messaging_edges(model)

    text = _env.get_template("model.dot.j2").render(
        name=model.name,
        clusters=clusters,
        loose=loose,
        triggers=triggers,
        messaging=messaging,
        endpoints=endpoints,
        service=_service(model),
    )
    logger.debug(f"rendered '{model.name}': {len(model.entities)} entities, {len(triggers)} triggers")
    return text
