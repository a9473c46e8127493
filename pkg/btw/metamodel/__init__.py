from btw.metamodel.registry import (
    ConceptId,
    ConceptKind,
    ConceptRegistry,
    ScopeTag,
    add_relation,
    check_allocation_axiom,
    register_concept,
    scope_projection,
)

__all__ = [
    "ConceptId",
    "ConceptKind",
    "ConceptRegistry",
    "ScopeTag",
    "add_relation",
    "check_allocation_axiom",
    "register_concept",
    "scope_projection",
]
