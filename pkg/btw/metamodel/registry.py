"""Business-scope concept registry: named concepts, the relations over them and
the organisational axioms that can be checked on demand."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from btw.config import settings
from btw.errors import (
    CycleIntroduced,
    Diagnostic,
    DuplicateName,
    IllegalScope,
    KindMismatch,
    NO_SPAN,
    Severity,
    SourceSpan,
    UnknownConcept,
)

logger = logging.getLogger(__name__)


class ConceptKind(str, Enum):
    ORG_UNIT = "OrgUnit"
    ACTOR = "Actor"
    ROLE = "Role"
    PROCESS = "Process"
    DECISION = "Decision"
    SYNCHRONISER = "Synchroniser"
    SERVICE = "Service"
    OBJECT_TYPE = "ObjectType"
    OBJECT_STORE = "ObjectStore"
    MESSAGE_TYPE = "MessageType"
    MESSAGE_BUFFER = "MessageBuffer"


class ScopeTag(str, Enum):
    DOMAIN = "Domain"
    ENVIRONMENT = "Environment"


# Only services and message types may live in the business environment
ENVIRONMENT_KINDS = {ConceptKind.SERVICE, ConceptKind.MESSAGE_TYPE}

PROCESS_KINDS = {ConceptKind.PROCESS, ConceptKind.DECISION, ConceptKind.SYNCHRONISER}

# relation name -> (left kinds, right kinds); None means any kind
RELATION_SIGNATURES: dict[str, tuple[set[ConceptKind], set[ConceptKind] | None]] = {
    "structure": ({ConceptKind.ORG_UNIT}, None),
    "subOf": ({ConceptKind.ORG_UNIT}, {ConceptKind.ORG_UNIT}),
    "assign": ({ConceptKind.ACTOR}, {ConceptKind.ROLE}),
    "undertake": ({ConceptKind.ROLE}, {ConceptKind.PROCESS, ConceptKind.DECISION}),
    "mesAlloc": ({ConceptKind.MESSAGE_BUFFER}, {ConceptKind.MESSAGE_TYPE}),
}

PROTOCOLS = ("fifo", "lifo", "random")

AXIOM_ANCHOR = "Assign o Undertake o Structure is included in Structure"


@dataclass(frozen=True, order=True)
class ConceptId:
    id: str
    kind: ConceptKind

    def __str__(self) -> str:
        return self.id


@dataclass
class Concept:
    id: ConceptId
    name: str
    scope: ScopeTag
    span: SourceSpan = NO_SPAN


@dataclass
class ConceptRegistry:
    concepts: dict[ConceptId, Concept] = field(default_factory=dict)
    relations: dict[str, list[tuple[ConceptId, ConceptId]]] = field(
        default_factory=lambda: {name: [] for name in RELATION_SIGNATURES}
    )
    # Buffer -> "fifo" | "lifo" | "random" | "predicate:<expr>"
    m_protocol: dict[ConceptId, str] = field(default_factory=dict)
    schema: dict[ConceptId, tuple[str, ...]] = field(default_factory=dict)
    fragment: dict[ConceptId, str] = field(default_factory=dict)
    # Object types and stores -> "material" | "informational"
    nature: dict[ConceptId, str] = field(default_factory=dict)
    _by_name: dict[tuple[ConceptKind, str, ScopeTag], ConceptId] = field(default_factory=dict)
    _counter: int = 0

    def __len__(self) -> int:
        return len(self.concepts)

    def name(self, cid: ConceptId) -> str:
        try:
            return self.concepts[cid].name
        except KeyError:
            raise UnknownConcept(f"no concept with id {cid}") from None

    def get(self, cid: ConceptId) -> Concept:
        try:
            return self.concepts[cid]
        except KeyError:
            raise UnknownConcept(f"no concept with id {cid}") from None

    def lookup(self, kind: ConceptKind, name: str, scope: ScopeTag | None = None) -> ConceptId | None:
        """Resolve a name to an id. Without a scope, domain concepts win over environment ones."""
        scopes = [scope] if scope else [ScopeTag.DOMAIN, ScopeTag.ENVIRONMENT]
        for tag in scopes:
            cid = self._by_name.get((kind, name, tag))
            if cid is not None:
                return cid
        return None

    def lookup_any(self, name: str, kinds: set[ConceptKind] | None = None) -> ConceptId | None:
        for kind in ConceptKind:
            if kinds and kind not in kinds:
                continue
            cid = self.lookup(kind, name)
            if cid is not None:
                return cid
        return None

    def of_kind(self, kind: ConceptKind) -> list[ConceptId]:
        return [cid for cid in self.concepts if cid.kind is kind]

    def related(self, relation: str, left: ConceptId | None = None, right: ConceptId | None = None):
        return [
            (l, r) for l, r in self.relations[relation]
            if (left is None or l == left) and (right is None or r == right)
        ]


def register_concept(
    registry: ConceptRegistry,
    kind: ConceptKind,
    name: str,
    scope: ScopeTag = ScopeTag.DOMAIN,
    span: SourceSpan = NO_SPAN,
) -> ConceptId:
    if not name:
        raise ValueError("concept name must be nonempty")
    if scope is ScopeTag.ENVIRONMENT and kind not in ENVIRONMENT_KINDS:
        raise IllegalScope(f"{kind.value} '{name}' cannot belong to the business environment")
    key = (kind, name, scope)
    if key in registry._by_name:
        raise DuplicateName(f"{kind.value} '{name}' is already registered in the {scope.value.lower()}")

    registry._counter += 1
    cid = ConceptId(f"c{registry._counter:04d}", kind)
    registry.concepts[cid] = Concept(cid, name, scope, span)
    registry._by_name[key] = cid
    return cid


def _reaches(registry: ConceptRegistry, start: ConceptId, goal: ConceptId) -> bool:
    """Depth-first search upwards along subOf."""
    stack = [start]
    seen: set[ConceptId] = set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(parent for child, parent in registry.relations["subOf"] if child == node)
    return False


def add_relation(registry: ConceptRegistry, relation_name: str, left: ConceptId, right: ConceptId) -> None:
    if relation_name not in RELATION_SIGNATURES:
        raise KindMismatch(f"unknown relation '{relation_name}'")
    for cid in (left, right):
        if cid not in registry.concepts:
            raise UnknownConcept(f"no concept with id {cid}")

    left_kinds, right_kinds = RELATION_SIGNATURES[relation_name]
    if left.kind not in left_kinds or (right_kinds is not None and right.kind not in right_kinds):
        raise KindMismatch(
            f"{relation_name} does not relate {left.kind.value} '{registry.name(left)}' "
            f"to {right.kind.value} '{registry.name(right)}'"
        )

    pairs = registry.relations[relation_name]
    if (left, right) in pairs:
        return
    if relation_name == "subOf" and _reaches(registry, right, left):
        raise CycleIntroduced(
            f"'{registry.name(left)}' sub_of '{registry.name(right)}' would make the organisation cyclic"
        )
    pairs.append((left, right))


def set_protocol(registry: ConceptRegistry, buffer: ConceptId, protocol: str) -> None:
    if buffer.kind is not ConceptKind.MESSAGE_BUFFER:
        raise KindMismatch(f"'{registry.name(buffer)}' is not a message buffer")
    if protocol not in PROTOCOLS and not protocol.startswith("predicate:"):
        raise ValueError(f"unknown message protocol '{protocol}'")
    registry.m_protocol[buffer] = protocol


def descendants(registry: ConceptRegistry, unit: ConceptId) -> list[ConceptId]:
    """The unit itself plus every unit below it in the subOf forest."""
    found = [unit]
    frontier = [unit]
    while frontier:
        parent = frontier.pop()
        for child, p in registry.relations["subOf"]:
            if p == parent and child not in found:
                found.append(child)
                frontier.append(child)
    return found


def check_allocation_axiom(registry: ConceptRegistry, strict: bool | None = None) -> list[Diagnostic]:
    """Every actor assigned to a role undertaking a process located in unit u must
    itself be located in u (strict) or in u or a unit below it (transitive)."""
    strict = settings.strict_allocation if strict is None else strict
    structure = set(registry.relations["structure"])
    diagnostics = []

    for actor, role in registry.relations["assign"]:
        for r, process in registry.relations["undertake"]:
            if r != role:
                continue
            for unit, p in registry.relations["structure"]:
                if p != process:
                    continue
                units = [unit] if strict else descendants(registry, unit)
                if any((u, actor) in structure for u in units):
                    continue
                names = tuple(registry.name(c) for c in (actor, role, process, unit))
                diagnostics.append(Diagnostic(
                    code="V015",
                    severity=Severity.ERROR,
                    message=(
                        f"actor '{names[0]}' plays role '{names[1]}' for '{names[2]}' "
                        f"but is not located in '{names[3]}'"
                    ),
                    span=registry.get(actor).span,
                    subject=names,
                    anchor=AXIOM_ANCHOR,
                ))
    return diagnostics


def scope_projection(registry: ConceptRegistry, tag: ScopeTag) -> set[ConceptId]:
    return {cid for cid, concept in registry.concepts.items() if concept.scope is tag}
