"""Lowering of a parsed spec into a ConceptRegistry plus WorkflowModel.

Resolves every name, materialises Sup from nesting, desugars implicit
messaging into hidden FIFO buffers and type-checks all expressions. Problems
come back as E2xx diagnostics; axiom violations are left to the validator."""

from __future__ import annotations

import logging

from btw.dsl import ast
from btw.dsl.formatter import format_expr
from btw.dsl.parser import BIRTH, DEATH
from btw.errors import (
    CycleIntroduced,
    Diagnostic,
    DuplicateName,
    IllegalScope,
    KindMismatch,
    RegistryError,
    Severity,
    SourceSpan,
    has_errors,
)
from btw.expr.ast import Counterpart
from btw.expr.typecheck import (
    MISMATCH,
    UNRESOLVED,
    TypeEnv,
    check_expression,
    check_predicate,
    check_statement,
    message_record,
)
from btw.expr.values import SCALAR_TYPES, ExprType, ValueKind
from btw.metamodel.registry import (
    ConceptId,
    ConceptKind,
    ConceptRegistry,
    ScopeTag,
    add_relation,
    register_concept,
    set_protocol,
)
from btw.models import (
    BufferInfo,
    CommitGroup,
    EcaAction,
    Entity,
    EntityKind,
    Event,
    MessageInfo,
    Messaging,
    MessagingMode,
    RecoverySpec,
    ServiceModel,
    StoreInfo,
    SyncCall,
    Transition,
    Trigger,
    VarInfo,
    WorkflowModel,
)

logger = logging.getLogger(__name__)

DUPLICATE = "E203"
REGISTRY = "E204"

ENTITY_CONCEPTS = {
    "process": ConceptKind.PROCESS,
    "decision": ConceptKind.DECISION,
    "sync": ConceptKind.SYNCHRONISER,
}


def inbox_buffer(message: str) -> str:
    return f"inbox:{message}"


def link_buffer(sender: str, receiver: str) -> str:
    return f"{sender}->{receiver}"


class Lowerer:
    def __init__(self, spec: ast.SpecAst):
        self.spec = spec
        self.registry = ConceptRegistry()
        self.model = WorkflowModel(name=spec.scope.name)
        self.diagnostics: list[Diagnostic] = []
        # entity key -> its declaration, for the second pass
        self.decls: dict[str, ast.EntityDecl] = {}

    def error(self, code: str, message: str, span: SourceSpan) -> None:
        self.diagnostics.append(Diagnostic(code, Severity.ERROR, message, span))

    def register(self, kind: ConceptKind, name: str, span: SourceSpan, scope=ScopeTag.DOMAIN) -> ConceptId | None:
        try:
            return register_concept(self.registry, kind, name, scope, span)
        except DuplicateName as e:
            self.error(DUPLICATE, str(e), span)
        except IllegalScope as e:
            self.error(REGISTRY, str(e), span)
        return None

    def relate(self, relation: str, left: ConceptId, right: ConceptId, span: SourceSpan) -> None:
        try:
            add_relation(self.registry, relation, left, right)
        except CycleIntroduced:
            self.model.rejected_suborgs.append((self.registry.name(left), self.registry.name(right), span))
        except (KindMismatch, RegistryError) as e:
            self.error(REGISTRY, str(e), span)

    def resolve(self, kind: ConceptKind, name: str, span: SourceSpan, what: str) -> ConceptId | None:
        cid = self.registry.lookup(kind, name)
        if cid is None:
            self.error(UNRESOLVED, f"unknown {what} '{name}'", span)
        return cid

    # --- schemas ---

    def lower_schemas(self) -> None:
        for schema in self.spec.schemas:
            if schema.name in self.model.schemas:
                self.error(DUPLICATE, f"schema '{schema.name}' is declared twice", schema.span)
                continue
            fields: dict[str, ExprType] = {}
            for f in schema.fields:
                if f.name in fields:
                    self.error(DUPLICATE, f"schema '{schema.name}' declares field '{f.name}' twice", f.span)
                    continue
                fields[f.name] = ExprType(ValueKind.REF, f.target) if f.kind == "ref" else SCALAR_TYPES[f.kind]
            if not fields:
                self.error(MISMATCH, f"schema '{schema.name}' has no fields", schema.span)
            self.model.schemas[schema.name] = fields

    def check_schema_refs(self) -> None:
        for schema in self.spec.schemas:
            for f in schema.fields:
                if f.kind == "ref" and f.target not in self.model.stores:
                    self.error(UNRESOLVED, f"field '{f.name}' refers to unknown store '{f.target}'", f.span)

    def schema_ref(self, name: str | None, span: SourceSpan) -> str | None:
        if name is not None and name not in self.model.schemas:
            self.error(UNRESOLVED, f"unknown schema '{name}'", span)
            return None
        return name

    # --- scope ---

    def lower_scope(self) -> None:
        items = self.spec.scope.items
        for item in items:
            if isinstance(item, ast.OrgUnitDecl):
                self.register(ConceptKind.ORG_UNIT, item.name, item.span)
            elif isinstance(item, ast.ActorDecl):
                self.register(ConceptKind.ACTOR, item.name, item.span)
            elif isinstance(item, ast.RoleDecl):
                self.register(ConceptKind.ROLE, item.name, item.span)
            elif isinstance(item, ast.ServiceDecl):
                scope = ScopeTag.ENVIRONMENT if item.external else ScopeTag.DOMAIN
                if self.register(ConceptKind.SERVICE, item.name, item.span, scope):
                    self.model.services[item.name] = item.external
            elif isinstance(item, ast.MessageDecl):
                scope = ScopeTag.ENVIRONMENT if item.external else ScopeTag.DOMAIN
                cid = self.register(ConceptKind.MESSAGE_TYPE, item.name, item.span, scope)
                if cid:
                    schema = self.schema_ref(item.schema, item.span)
                    if schema:
                        self.registry.schema[cid] = (schema,)
                    self.model.messages[item.name] = MessageInfo(item.name, schema, item.external, item.span)
            elif isinstance(item, ast.ObjTypeDecl):
                cid = self.register(ConceptKind.OBJECT_TYPE, item.name, item.span)
                if cid:
                    self.registry.nature[cid] = item.nature
                    schema = self.schema_ref(item.schema, item.span)
                    if schema:
                        self.registry.schema[cid] = (schema,)
                    self.model.objtypes[item.name] = item.nature

        # Stores and buffers refer to object and message types declared anywhere in the block
        for item in items:
            if isinstance(item, ast.StoreDecl):
                self.lower_store(item)
            elif isinstance(item, ast.BufferDecl):
                self.lower_buffer(item)

        for item in items:
            if isinstance(item, ast.OrgUnitDecl) and item.parent:
                child = self.registry.lookup(ConceptKind.ORG_UNIT, item.name)
                parent = self.resolve(ConceptKind.ORG_UNIT, item.parent, item.span, "org unit")
                if child and parent:
                    self.relate("subOf", child, parent, item.span)
            elif isinstance(item, ast.ActorDecl) and item.unit:
                actor = self.registry.lookup(ConceptKind.ACTOR, item.name)
                unit = self.resolve(ConceptKind.ORG_UNIT, item.unit, item.span, "org unit")
                if actor and unit:
                    self.relate("structure", unit, actor, item.span)
            elif isinstance(item, ast.AssignDecl):
                actor = self.resolve(ConceptKind.ACTOR, item.actor, item.span, "actor")
                role = self.resolve(ConceptKind.ROLE, item.role, item.span, "role")
                if actor and role:
                    self.relate("assign", actor, role, item.span)

    def lower_store(self, item: ast.StoreDecl) -> None:
        cid = self.register(ConceptKind.OBJECT_STORE, item.name, item.span)
        if cid is None:
            return
        schema = self.schema_ref(item.schema, item.span)
        for held in item.holds:
            if held not in self.model.objtypes:
                self.error(UNRESOLVED, f"store '{item.name}' holds unknown object type '{held}'", item.span)
        if schema:
            self.registry.schema[cid] = (schema,)
        if item.fragment:
            self.registry.fragment[cid] = item.fragment
        if item.nature:
            self.registry.nature[cid] = item.nature
        self.model.stores[item.name] = StoreInfo(item.name, schema, item.nature, list(item.holds), item.fragment, item.span)

    def lower_buffer(self, item: ast.BufferDecl) -> None:
        cid = self.register(ConceptKind.MESSAGE_BUFFER, item.name, item.span)
        if cid is None:
            return
        for held in item.holds:
            message = self.resolve(ConceptKind.MESSAGE_TYPE, held, item.span, "message type")
            if message:
                self.relate("mesAlloc", cid, message, item.span)
        protocol = item.protocol
        if item.predicate is not None:
            protocol = f"predicate:{format_expr(item.predicate)}"
            if not item.holds:
                self.error(MISMATCH, f"predicate buffer '{item.name}' must hold a message type", item.span)
        set_protocol(self.registry, cid, protocol)
        self.model.buffers[item.name] = BufferInfo(
            item.name, item.protocol, item.predicate, list(item.holds), False, item.span,
        )

    def check_buffer_predicates(self) -> None:
        for info in self.model.buffers.values():
            if info.predicate is not None and info.holds:
                env = self.base_env().bind("m", message_record(info.holds[0]))
                self.diagnostics.extend(check_predicate(info.predicate, env))

    def lower_scope_links(self) -> None:
        """Relations that name process entities, resolved once entities exist."""
        for item in self.spec.scope.items:
            if isinstance(item, ast.UndertakeDecl):
                role = self.resolve(ConceptKind.ROLE, item.role, item.span, "role")
                process = self.registry.lookup(ConceptKind.PROCESS, item.process) or self.registry.lookup(
                    ConceptKind.DECISION, item.process
                )
                if process is None:
                    self.error(UNRESOLVED, f"unknown process '{item.process}'", item.span)
                if role and process:
                    self.relate("undertake", role, process, item.span)
            elif isinstance(item, ast.StructureDecl):
                unit = self.resolve(ConceptKind.ORG_UNIT, item.unit, item.span, "org unit")
                concept = self.registry.lookup_any(item.concept)
                if concept is None:
                    self.error(UNRESOLVED, f"unknown concept '{item.concept}'", item.span)
                if unit and concept:
                    self.relate("structure", unit, concept, item.span)

    # --- process models: pass one builds the entity tree ---

    def lower_models(self) -> None:
        for decl in self.spec.models:
            if decl.name in self.model.models:
                self.error(DUPLICATE, f"model '{decl.name}' is declared twice", decl.span)
                continue
            self.model.models[decl.name] = [
                self.lower_entity(entity, decl.name, None, []) for entity in decl.entities
            ]

    def lower_entity(self, decl: ast.EntityDecl, model: str, parent: str | None, ancestors: list[Entity]) -> str:
        base = decl.name if parent is None else f"{parent}/{decl.name}"
        key = base
        if key in self.model.entities:
            self.model.duplicate_names.append((decl.name, parent or model, decl.span))
            n = 2
            while f"{base}#{n}" in self.model.entities:
                n += 1
            key = f"{base}#{n}"

        kind = EntityKind(decl.kind)
        concept_kind = ENTITY_CONCEPTS[decl.kind]
        concept = self.registry.lookup(concept_kind, decl.name) or self.register(concept_kind, decl.name, decl.span)
        entity = Entity(key, decl.name, kind, model, concept, parent, has_body=decl.clauses is not None, span=decl.span)
        self.model.entities[key] = entity
        self.model.spans[key] = decl.span
        self.decls[key] = decl

        if decl.clauses is None:
            recursive = next((a for a in reversed(ancestors) if a.name == decl.name), None)
            if recursive is not None:
                entity.recursive_of = recursive.key
            return key

        chain = ancestors + [entity]
        for clause in decl.clauses:
            if isinstance(clause, ast.EntityDecl):
                entity.children.append(self.lower_entity(clause, model, key, chain))
        for clause in decl.clauses:
            self.lower_local_clause(entity, clause)
        return key

    def lower_local_clause(self, entity: Entity, clause) -> None:
        if isinstance(clause, ast.StoreRef):
            if clause.name not in self.model.stores:
                self.error(UNRESOLVED, f"unknown store '{clause.name}'", clause.span)
            elif clause.name not in entity.locse:
                entity.locse.append(clause.name)
        elif isinstance(clause, ast.BufferRef):
            if clause.name not in self.model.buffers:
                self.error(UNRESOLVED, f"unknown buffer '{clause.name}'", clause.span)
            elif clause.name not in entity.locse:
                entity.locse.append(clause.name)
        elif isinstance(clause, ast.VarDecl):
            if clause.name in entity.locvar:
                self.error(DUPLICATE, f"variable '{clause.name}' is declared twice", clause.span)
                return
            if clause.kind == "ref":
                if clause.target not in self.model.stores:
                    self.error(UNRESOLVED, f"unknown store '{clause.target}'", clause.span)
                var_type = ExprType(ValueKind.REF, clause.target)
            else:
                var_type = SCALAR_TYPES[clause.kind]
            entity.locvar[clause.name] = VarInfo(clause.name, var_type, clause.init, clause.span)
        elif isinstance(clause, ast.RoleClause):
            if self.resolve(ConceptKind.ROLE, clause.role, clause.span, "role"):
                entity.role = clause.role
        elif isinstance(clause, ast.FlagClause):
            entity.exclusive = True
        elif isinstance(clause, ast.AmountClause):
            if clause.keyword == "duration":
                entity.duration = clause.seconds
            else:
                entity.timeout = clause.seconds
        elif isinstance(clause, ast.ConditionClause):
            if clause.keyword == "pre":
                entity.pre = clause.expr
            elif clause.keyword == "post":
                entity.post = clause.expr
            else:
                entity.rules[clause.keyword] = clause.expr
        elif isinstance(clause, ast.HciClause):
            entity.hci.append((clause.name, self.schema_ref(clause.schema, clause.span)))
        elif isinstance(clause, ast.ActionClause):
            entity.action.extend(clause.statements)
        elif isinstance(clause, ast.TerminateClause):
            entity.terminates.append(clause.outcome)
        elif isinstance(clause, ast.AbortClause):
            entity.aborts[clause.on] = clause.as_ or clause.on
        elif isinstance(clause, ast.CombineClause):
            entity.combine = clause.mode

    # --- pass two: links between entities ---

    def lookup_entity(self, name: str, scope: Entity | None) -> Entity | None:
        """Children of the declaring body first, then anywhere in the spec."""
        if scope is not None:
            for key in scope.children:
                if self.model.entities[key].name == name:
                    return self.model.entities[key]
        return self.model.find(name)

    def sibling(self, entity: Entity, name: str) -> Entity | None:
        parent = self.model.entities[entity.parent] if entity.parent else None
        if parent is None:
            for key in self.model.models.get(entity.model, []):
                if self.model.entities[key].name == name:
                    return self.model.entities[key]
            return self.model.find(name)
        return self.lookup_entity(name, parent)

    def link_entities(self) -> None:
        for key, decl in self.decls.items():
            entity = self.model.entities[key]
            for clause in decl.clauses or []:
                if isinstance(clause, ast.InitialClause):
                    for name in clause.names:
                        child = self.lookup_entity(name, entity)
                        if child is None or child.parent != key:
                            self.error(UNRESOLVED, f"'{name}' is not part of the decomposition of '{entity.name}'", clause.span)
                        elif child.key not in entity.initial:
                            entity.initial.append(child.key)
                elif isinstance(clause, ast.TriggerClause):
                    source = self.lookup_entity(clause.source, entity)
                    target = self.lookup_entity(clause.target, entity)
                    for name, found in ((clause.source, source), (clause.target, target)):
                        if found is None:
                            self.error(UNRESOLVED, f"trigger names unknown entity '{name}'", clause.span)
                    if source and target:
                        self.model.triggers.append(Trigger(source.key, target.key, clause.outcome, key, clause.span))
                elif isinstance(clause, ast.CommitClause):
                    members = []
                    for name in clause.members:
                        child = self.lookup_entity(name, entity)
                        if child is None or child.parent != key:
                            self.error(UNRESOLVED, f"commit group '{clause.group}' names unknown member '{name}'", clause.span)
                        else:
                            members.append(child.key)
                    if any(g.name == clause.group and g.owner == key for g in self.model.commit_groups):
                        self.error(DUPLICATE, f"commit group '{clause.group}' is declared twice", clause.span)
                    else:
                        self.model.commit_groups.append(CommitGroup(clause.group, key, members, clause.span))
                elif isinstance(clause, ast.MessagingClause):
                    self.lower_messaging(entity, clause)
                elif isinstance(clause, ast.SyncClause):
                    self.lower_sync(entity, clause)

    def require_message(self, name: str, span: SourceSpan) -> bool:
        if name not in self.model.messages:
            self.error(UNRESOLVED, f"unknown message type '{name}'", span)
            return False
        return True

    def hidden_buffer(self, name: str, holds: list[str], owner: Entity) -> str:
        info = self.model.buffers.get(name)
        if info is None:
            self.model.buffers[name] = BufferInfo(name, "fifo", None, list(holds), True)
        else:
            info.holds.extend(m for m in holds if m not in info.holds)
        parent = self.model.entities[owner.parent] if owner.parent else None
        if parent is not None and name not in parent.locse:
            parent.locse.append(name)
        return name

    def resolve_counterpart(self, entity: Entity, counterpart: Counterpart, span: SourceSpan) -> Counterpart | None:
        if counterpart.kind == "entity":
            other = self.sibling(entity, counterpart.name)
            if other is None:
                self.error(UNRESOLVED, f"messaging names unknown entity '{counterpart.name}'", span)
                return None
            return Counterpart("entity", other.key)
        if counterpart.kind == "buffer" and counterpart.name not in self.model.buffers:
            self.error(UNRESOLVED, f"unknown buffer '{counterpart.name}'", span)
            return None
        return counterpart

    def lower_messaging(self, entity: Entity, clause: ast.MessagingClause) -> None:
        counterpart = self.resolve_counterpart(entity, clause.counterpart, clause.span)
        if counterpart is None:
            return
        incoming = clause.verb in ("receive", "take")
        for message in clause.messages:
            if not self.require_message(message, clause.span):
                continue
            buffer = None
            if counterpart.kind == "buffer":
                buffer = counterpart.name
            elif counterpart.kind == "entity":
                pair = (counterpart.name, entity.key) if incoming else (entity.key, counterpart.name)
                buffer = self.hidden_buffer(link_buffer(*pair), [message], entity)
            elif counterpart.kind == "service" and incoming:
                buffer = self.hidden_buffer(inbox_buffer(message), [message], entity)
            mode = MessagingMode.ASYNC_IN if incoming else MessagingMode.ASYNC_OUT
            target = entity.receives if incoming else entity.sends
            target.append(Messaging(message, mode, counterpart, buffer, clause.span))

    def lower_sync(self, entity: Entity, clause: ast.SyncClause) -> None:
        counterpart = self.resolve_counterpart(entity, clause.counterpart, clause.span)
        ok = self.require_message(clause.send, clause.span) & self.require_message(clause.receive, clause.span)
        if counterpart is None or not ok:
            return
        call = SyncCall(clause.send, clause.receive, counterpart, clause.send_first, span=clause.span)
        if counterpart.kind == "entity":
            call.out_buffer = self.hidden_buffer(link_buffer(entity.key, counterpart.name), [clause.send], entity)
            call.in_buffer = self.hidden_buffer(link_buffer(counterpart.name, entity.key), [clause.receive], entity)
        elif counterpart.kind == "service":
            call.in_buffer = self.hidden_buffer(inbox_buffer(clause.receive), [clause.receive], entity)
        entity.syncs.append(call)

    # --- typing ---

    def base_env(self) -> TypeEnv:
        records = {name: self.model.record_schema(name) for name in self.model.stores}
        records.update({f"msg:{name}": self.model.message_schema(name) for name in self.model.messages})
        states = set(self.model.service.states) if self.model.service else set()
        return TypeEnv(
            records=records,
            stores=set(self.model.stores),
            messages=set(self.model.messages),
            entities={e.name for e in self.model.entities.values()},
            states=states,
        )

    def visible_variables(self, entity: Entity) -> dict[str, ExprType]:
        variables: dict[str, ExprType] = {}
        for key in [entity.key, *self.model.ancestors(entity.key)]:
            for name, info in self.model.entities[key].locvar.items():
                variables.setdefault(name, info.type)
        return variables

    def check_types(self) -> None:
        base = self.base_env()
        self.check_buffer_predicates()
        for entity in self.model.entities.values():
            env = TypeEnv(**{**base.__dict__, "variables": self.visible_variables(entity)})
            for info in entity.locvar.values():
                if info.init is not None:
                    self.diagnostics.extend(check_expression(info.init, env, info.type))
            for expr in (entity.pre, entity.post, *entity.rules.values()):
                if expr is not None:
                    self.diagnostics.extend(check_predicate(expr, env))
            for stmt in entity.action:
                self.diagnostics.extend(check_statement(stmt, env))

        if self.model.service:
            for transition in self.model.service.transitions:
                for expr in (transition.event.expr, transition.condition):
                    if expr is not None:
                        self.diagnostics.extend(check_predicate(expr, base))

    # --- service and recovery ---

    def lower_service(self) -> None:
        if not self.spec.services:
            return
        first, *rest = self.spec.services
        for extra in rest:
            self.error(DUPLICATE, f"only one service model is allowed; '{extra.name}' is extra", extra.span)

        service = ServiceModel(first.name, [BIRTH, DEATH], span=first.span)
        for state in first.states:
            if state.name in service.states:
                self.error(DUPLICATE, f"state '{state.name}' is declared twice", state.span)
                continue
            service.states.append(state.name)
            if state.max is not None:
                service.state_max[state.name] = state.max

        for number, t in enumerate(first.transitions, start=1):
            e = t.event
            service.transitions.append(Transition(
                id=f"R{number}",
                source=t.source,
                target=t.target,
                event=Event(e.kind, e.subject, e.outcome, e.threshold, e.expr),
                condition=t.condition,
                actions=[EcaAction(a.kind, a.message, a.target) for a in t.actions],
                span=t.span,
            ))
        self.model.service = service

    def lower_recovery(self) -> None:
        for block in self.spec.recoveries:
            for entry in block.entries:
                if entry.entity in self.model.recovery:
                    self.error(DUPLICATE, f"recovery for '{entry.entity}' is declared twice", entry.span)
                    continue
                subject = self.model.find(entry.entity)
                default = "null" if subject and subject.kind is EntityKind.DECISION else "undo"
                self.model.recovery[entry.entity] = RecoverySpec(
                    entity=entry.entity,
                    ladder=[(r.threshold, r.target) for r in entry.ladder or []],
                    rollback=entry.rollback or default,
                    compensate=entry.compensate,
                    span=entry.span,
                )

    def run(self) -> tuple[ConceptRegistry, WorkflowModel] | list[Diagnostic]:
        self.lower_schemas()
        self.lower_scope()
        self.check_schema_refs()
        self.lower_models()
        self.lower_scope_links()
        self.link_entities()
        self.lower_service()
        self.lower_recovery()
        self.check_types()
        if has_errors(self.diagnostics):
            return self.diagnostics
        logger.info(
            f"lowered '{self.model.name}': {len(self.model.entities)} entities, "
            f"{len(self.model.triggers)} triggers, {len(self.registry)} concepts"
        )
        return self.registry, self.model


def lower(spec: ast.SpecAst) -> tuple[ConceptRegistry, WorkflowModel] | list[Diagnostic]:
    return Lowerer(spec).run()
