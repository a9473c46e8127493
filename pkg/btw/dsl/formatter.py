"""Canonical pretty-printer. `parse(format_spec(a))` is structurally equal to `a`."""

from __future__ import annotations

from btw.dsl import ast
from btw.dsl.parser import BIRTH, DEATH
from btw.expr.ast import (
    AddStmt,
    Assignment,
    Binary,
    BINARY_PRECEDENCE,
    Call,
    Counterpart,
    Expr,
    Field,
    Literal,
    MsgRef,
    Quantifier,
    RemoveStmt,
    SendEachStmt,
    SendStmt,
    SetStmt,
    Stmt,
    TransferStmt,
    Unary,
    UpdateStmt,
    Var,
)
from btw.expr.values import Date, Duration, TimeOfDay, Timestamp

INDENT = "    "
COMPARISON_PREC = BINARY_PRECEDENCE["=="]


def quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_duration(d: Duration) -> str:
    return f"{d.days} days" if d.seconds == 0 else f"{d.total} seconds"


def format_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return quote(value)
    if isinstance(value, Date):
        return f"date {quote(str(value))}"
    if isinstance(value, TimeOfDay):
        return f"time {quote(str(value))}"
    if isinstance(value, Timestamp):
        return f"at {quote(str(value))}"
    if isinstance(value, Duration):
        return format_duration(value)
    raise ValueError(f"cannot format literal {value!r}")


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Literal):
        return format_literal(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, MsgRef):
        return f"msg {quote(expr.message)}"
    if isinstance(expr, Field):
        base = format_expr(expr.base)
        if isinstance(expr.base, (Binary, Unary)) or (
            isinstance(expr.base, Literal) and isinstance(expr.base.value, Duration)
        ):
            base = f"({base})"
        return f"{base}.{expr.name}"
    if isinstance(expr, Quantifier):
        return f"{expr.kind} {expr.var} in {quote(expr.store)} ({format_expr(expr.body)})"
    if isinstance(expr, Call):
        return f"{expr.func}({quote(expr.arg) if expr.arg is not None else ''})"
    if isinstance(expr, Unary):
        operand = format_expr(expr.operand)
        if expr.op == "not":
            if isinstance(expr.operand, Binary) and BINARY_PRECEDENCE[expr.operand.op] < COMPARISON_PREC:
                operand = f"({operand})"
            return f"not {operand}"
        if isinstance(expr.operand, Binary):
            operand = f"({operand})"
        return f"-{operand}"
    if isinstance(expr, Binary):
        prec = BINARY_PRECEDENCE[expr.op]
        left = _operand(expr.left, prec, right=False)
        right = _operand(expr.right, prec, right=True)
        return f"{left} {expr.op} {right}"
    raise ValueError(f"cannot format {type(expr).__name__}")


def _operand(child: Expr, parent_prec: int, right: bool) -> str:
    text = format_expr(child)
    if isinstance(child, Unary) and child.op == "not" and parent_prec >= COMPARISON_PREC:
        return f"({text})"
    if isinstance(child, Binary):
        prec = BINARY_PRECEDENCE[child.op]
        if prec < parent_prec or (prec == parent_prec and (right or prec == COMPARISON_PREC)):
            return f"({text})"
    return text


def format_counterpart(c: Counterpart) -> str:
    return str(c)


def _assignments(assignments: list[Assignment]) -> str:
    inner = ", ".join(f"{a.name} = {format_expr(a.value)}" for a in assignments)
    return f"{{ {inner} }}" if inner else "{ }"


def format_statement(stmt: Stmt) -> str:
    if isinstance(stmt, AddStmt):
        return f"add {quote(stmt.store)} {_assignments(stmt.assignments)};"
    if isinstance(stmt, RemoveStmt):
        return f"remove {stmt.var} in {quote(stmt.store)} where {format_expr(stmt.where)};"
    if isinstance(stmt, UpdateStmt):
        sets = ", ".join(f"{a.name} = {format_expr(a.value)}" for a in stmt.assignments)
        return f"update {stmt.var} in {quote(stmt.store)} where {format_expr(stmt.where)} set {sets};"
    if isinstance(stmt, SetStmt):
        return f"set {stmt.name} = {format_expr(stmt.value)};"
    if isinstance(stmt, TransferStmt):
        return f"transfer {quote(stmt.message)} into {quote(stmt.store)};"
    if isinstance(stmt, SendStmt):
        payload = f" {_assignments(stmt.assignments)}" if stmt.assignments is not None else ""
        return f"send {quote(stmt.message)}{payload} to {format_counterpart(stmt.target)};"
    if isinstance(stmt, SendEachStmt):
        where = f" where {format_expr(stmt.where)}" if stmt.where is not None else ""
        payload = f" {_assignments(stmt.assignments)}" if stmt.assignments is not None else ""
        return (
            f"send {quote(stmt.message)} to each {stmt.var} in {quote(stmt.store)}{where} "
            f"{format_counterpart(stmt.target)}{payload};"
        )
    raise ValueError(f"cannot format {type(stmt).__name__}")


def _names(names: list[str]) -> str:
    return ", ".join(quote(n) for n in names)


def _type_ref(kind: str, target: str | None) -> str:
    return f"ref {quote(target)}" if kind == "ref" else kind


def _scope_item(item) -> str:
    if isinstance(item, ast.OrgUnitDecl):
        return f"orgunit {quote(item.name)}" + (f" sub_of {quote(item.parent)}" if item.parent else "") + ";"
    if isinstance(item, ast.ActorDecl):
        return f"actor {quote(item.name)}" + (f" in {quote(item.unit)}" if item.unit else "") + ";"
    if isinstance(item, ast.RoleDecl):
        return f"role {quote(item.name)};"
    if isinstance(item, ast.AssignDecl):
        return f"assign {quote(item.actor)} to {quote(item.role)};"
    if isinstance(item, ast.UndertakeDecl):
        return f"undertake {quote(item.role)} {quote(item.process)};"
    if isinstance(item, ast.StructureDecl):
        return f"structure {quote(item.unit)} contains {quote(item.concept)};"
    if isinstance(item, ast.ServiceDecl):
        return f"service {quote(item.name)}" + (" external" if item.external else "") + ";"
    if isinstance(item, ast.MessageDecl):
        text = f"message {quote(item.name)}"
        if item.external:
            text += " external"
        if item.schema:
            text += f" schema {quote(item.schema)}"
        return text + ";"
    if isinstance(item, ast.ObjTypeDecl):
        text = f"objtype {quote(item.name)} {item.nature}"
        return text + (f" schema {quote(item.schema)}" if item.schema else "") + ";"
    if isinstance(item, ast.StoreDecl):
        text = f"store {quote(item.name)}"
        if item.nature:
            text += f" {item.nature}"
        if item.schema:
            text += f" schema {quote(item.schema)}"
        if item.holds:
            text += f" holds {_names(item.holds)}"
        if item.fragment:
            text += f" fragment {quote(item.fragment)}"
        return text + ";"
    if isinstance(item, ast.BufferDecl):
        protocol = f"predicate({format_expr(item.predicate)})" if item.protocol == "predicate" else item.protocol
        text = f"buffer {quote(item.name)} protocol {protocol}"
        return text + (f" holds {_names(item.holds)}" if item.holds else "") + ";"
    raise ValueError(f"cannot format {type(item).__name__}")


def _clause(clause, depth: int) -> list[str]:
    pad = INDENT * depth
    if isinstance(clause, ast.EntityDecl):
        return _entity(clause, depth)
    if isinstance(clause, ast.InitialClause):
        return [f"{pad}initial {_names(clause.names)};"]
    if isinstance(clause, ast.TriggerClause):
        outcome = f" {clause.outcome}" if clause.outcome else ""
        return [f"{pad}trigger {quote(clause.source)}{outcome} -> {quote(clause.target)};"]
    if isinstance(clause, ast.StoreRef):
        return [f"{pad}store {quote(clause.name)};"]
    if isinstance(clause, ast.BufferRef):
        return [f"{pad}buffer {quote(clause.name)};"]
    if isinstance(clause, ast.VarDecl):
        init = f" = {format_expr(clause.init)}" if clause.init is not None else ""
        return [f"{pad}var {clause.name}: {_type_ref(clause.kind, clause.target)}{init};"]
    if isinstance(clause, ast.CommitClause):
        return [f"{pad}commit {quote(clause.group)} {{ {_names(clause.members)} }}"]
    if isinstance(clause, ast.RoleClause):
        return [f"{pad}role {quote(clause.role)};"]
    if isinstance(clause, ast.FlagClause):
        return [f"{pad}{clause.flag};"]
    if isinstance(clause, ast.AmountClause):
        return [f"{pad}{clause.keyword} {clause.seconds};"]
    if isinstance(clause, ast.ConditionClause):
        return [f"{pad}{clause.keyword} {format_expr(clause.expr)};"]
    if isinstance(clause, ast.HciClause):
        schema = f" schema {quote(clause.schema)}" if clause.schema else ""
        return [f"{pad}hci {quote(clause.name)}{schema};"]
    if isinstance(clause, ast.ActionClause):
        inner = [f"{pad}{INDENT}{format_statement(s)}" for s in clause.statements]
        return [f"{pad}action {{", *inner, f"{pad}}}"]
    if isinstance(clause, ast.MessagingClause):
        if clause.verb in ("take", "put"):
            preposition = "from" if clause.verb == "take" else "into"
            return [f"{pad}{clause.verb} {quote(clause.messages[0])} {preposition} buffer {quote(clause.counterpart.name)};"]
        preposition = "from" if clause.verb == "receive" else "to"
        return [f"{pad}{clause.verb} {_names(clause.messages)} {preposition} {format_counterpart(clause.counterpart)};"]
    if isinstance(clause, ast.SyncClause):
        cp = format_counterpart(clause.counterpart)
        if clause.send_first:
            return [f"{pad}sync send {quote(clause.send)} to {cp} receive {quote(clause.receive)};"]
        return [f"{pad}sync receive {quote(clause.receive)} from {cp} send {quote(clause.send)};"]
    if isinstance(clause, ast.TerminateClause):
        return [f"{pad}terminate {clause.outcome};"]
    if isinstance(clause, ast.AbortClause):
        as_ = f" as {clause.as_}" if clause.as_ else ""
        return [f"{pad}abort on {clause.on}{as_};"]
    if isinstance(clause, ast.CombineClause):
        return [f"{pad}combine {clause.mode};"]
    raise ValueError(f"cannot format {type(clause).__name__}")


def _entity(entity: ast.EntityDecl, depth: int) -> list[str]:
    pad = INDENT * depth
    head = f"{pad}{entity.kind} {quote(entity.name)}"
    if entity.clauses is None:
        return [f"{head};"]
    lines = [f"{head} {{"]
    for clause in entity.clauses:
        lines.extend(_clause(clause, depth + 1))
    lines.append(f"{pad}}}")
    return lines


def _state_ref(name: str) -> str:
    return {BIRTH: "birth", DEATH: "death"}.get(name) or quote(name)


def _event(event: ast.EventSpec) -> str:
    if event.kind in ("db_state", "timer"):
        return f"{event.kind} {format_expr(event.expr)}"
    if event.kind == "abort":
        return f"abort {event.outcome}"
    if event.kind == "decision_end":
        return f"decision_end {quote(event.subject)} {event.outcome}"
    if event.kind == "process_start_failed":
        return f"process_start_failed {quote(event.subject)} {event.threshold}"
    return f"{event.kind} {quote(event.subject)}"


def _eca_action(action: ast.ActionSpec) -> str:
    if action.kind == "none":
        return "none"
    if action.kind == "trigger":
        return f"trigger {quote(action.target)}"
    return f"{action.kind} {quote(action.message)} to {quote(action.target)}"


def _transition(t: ast.TransitionDecl) -> str:
    text = f"on {_state_ref(t.source)}"
    if t.target is not None:
        text += f" -> {_state_ref(t.target)}"
    text += f" when {_event(t.event)}"
    if t.condition is not None:
        text += f" if {format_expr(t.condition)}"
    if t.actions:
        text += " then " + ", ".join(_eca_action(a) for a in t.actions)
    return text + ";"


def _rung(rung: ast.Rung) -> str:
    threshold = "*" if rung.threshold is None else str(rung.threshold)
    target = "self" if rung.target is None else quote(rung.target)
    return f"{threshold} -> {target}"


def _recovery_entry(entry: ast.RecoveryEntry) -> str:
    text = f"{quote(entry.entity)}:"
    if entry.ladder is not None:
        text += " redo [" + ", ".join(_rung(r) for r in entry.ladder) + "]"
    if entry.rollback is not None:
        text += f" rollback {entry.rollback}"
        if entry.rollback == "compensate":
            text += f" {quote(entry.compensate)}"
    return text + ";"


def format_spec(spec: ast.SpecAst) -> str:
    blocks = []
    scope = [f"scope {quote(spec.scope.name)} {{"]
    scope.extend(f"{INDENT}{_scope_item(item)}" for item in spec.scope.items)
    scope.append("}")
    blocks.append("\n".join(scope))

    for schema in spec.schemas:
        lines = [f"schema {quote(schema.name)} {{"]
        lines.extend(f"{INDENT}{f.name}: {_type_ref(f.kind, f.target)};" for f in schema.fields)
        lines.append("}")
        blocks.append("\n".join(lines))

    for model in spec.models:
        lines = [f"model {quote(model.name)} {{"]
        for entity in model.entities:
            lines.extend(_entity(entity, 1))
        lines.append("}")
        blocks.append("\n".join(lines))

    for service in spec.services:
        lines = [f"service {quote(service.name)} {{"]
        for state in service.states:
            limit = f" max {format_duration(state.max)}" if state.max is not None else ""
            lines.append(f"{INDENT}state {quote(state.name)}{limit};")
        lines.extend(f"{INDENT}{_transition(t)}" for t in service.transitions)
        lines.append("}")
        blocks.append("\n".join(lines))

    for recovery in spec.recoveries:
        lines = ["recovery {"]
        lines.extend(f"{INDENT}{_recovery_entry(e)}" for e in recovery.entries)
        lines.append("}")
        blocks.append("\n".join(lines))

    return "\n\n".join(blocks) + "\n"
