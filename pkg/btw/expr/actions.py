"""Execution of action blocks: store updates, variable assignment and message
construction. Effects come back in statement order."""

from __future__ import annotations

from dataclasses import dataclass

from btw.errors import DecisionWriteAttempt, SchemaViolation, UnboundVariable
from btw.expr.ast import (
    AddStmt,
    Assignment,
    Counterpart,
    RemoveStmt,
    SendEachStmt,
    SendStmt,
    SetStmt,
    Stmt,
    TransferStmt,
    UpdateStmt,
    WRITE_STATEMENTS,
)
from btw.expr.evaluator import Bindings, eval_predicate, evaluate
from btw.expr.snapshot import Delta, StoreSnapshot
from btw.expr.temporal import TemporalIndex
from btw.expr.values import Value


@dataclass(frozen=True)
class StoreChanged:
    store: str
    delta: Delta


@dataclass(frozen=True)
class VarSet:
    scope: str
    name: str
    old: Value
    new: Value
    delta: Delta


@dataclass(frozen=True)
class MessageOut:
    message: str
    payload: dict
    target: Counterpart


Effect = StoreChanged | VarSet | MessageOut


def deltas_of(effects: list[Effect]) -> list[Delta]:
    return [e.delta for e in effects if isinstance(e, (StoreChanged, VarSet))]


def _payload(assignments: list[Assignment], snapshot, temporal, bindings) -> dict:
    return {a.name: evaluate(a.value, snapshot, temporal, bindings) for a in assignments}


def exec_action(
    action: list[Stmt],
    snapshot: StoreSnapshot,
    bindings: Bindings,
    temporal: TemporalIndex | None = None,
) -> tuple[StoreSnapshot, list[Effect]]:
    temporal = temporal if temporal is not None else bindings.temporal
    effects: list[Effect] = []

    for stmt in action:
        if bindings.is_decision and isinstance(stmt, WRITE_STATEMENTS):
            raise DecisionWriteAttempt(f"decision '{bindings.entity}' may not write ({type(stmt).__name__})")

        if isinstance(stmt, AddStmt):
            record = _payload(stmt.assignments, snapshot, temporal, bindings)
            snapshot, delta = snapshot.insert(stmt.store, record)
            effects.append(StoreChanged(stmt.store, delta))

        elif isinstance(stmt, RemoveStmt):
            records = snapshot.records(stmt.store)
            # Highest index first keeps the remaining indices valid
            for index in range(len(records) - 1, -1, -1):
                if eval_predicate(stmt.where, snapshot, temporal, bindings.bind(stmt.var, records[index])):
                    snapshot, delta = snapshot.delete(stmt.store, index)
                    effects.append(StoreChanged(stmt.store, delta))

        elif isinstance(stmt, UpdateStmt):
            for index, record in enumerate(snapshot.records(stmt.store)):
                scoped = bindings.bind(stmt.var, record)
                if eval_predicate(stmt.where, snapshot, temporal, scoped):
                    changes = _payload(stmt.assignments, snapshot, temporal, scoped)
                    snapshot, delta = snapshot.update(stmt.store, index, changes)
                    effects.append(StoreChanged(stmt.store, delta))

        elif isinstance(stmt, SetStmt):
            scope = bindings.var_scopes.get(stmt.name)
            if scope is None:
                raise UnboundVariable(f"variable '{stmt.name}' is not bound")
            value = evaluate(stmt.value, snapshot, temporal, bindings)
            snapshot, delta = snapshot.assign(scope, stmt.name, value)
            effects.append(VarSet(scope, stmt.name, delta.old, value, delta))

        elif isinstance(stmt, SendStmt):
            if stmt.assignments is not None:
                payload = _payload(stmt.assignments, snapshot, temporal, bindings)
            else:
                received = bindings.messages.get(stmt.message)
                payload = dict(received[0]) if received else {}
            effects.append(MessageOut(stmt.message, payload, stmt.target))

        elif isinstance(stmt, SendEachStmt):
            for record in snapshot.records(stmt.store):
                scoped = bindings.bind(stmt.var, record)
                if stmt.where is not None and not eval_predicate(stmt.where, snapshot, temporal, scoped):
                    continue
                if stmt.assignments is not None:
                    payload = _payload(stmt.assignments, snapshot, temporal, scoped)
                else:
                    payload = dict(record)
                effects.append(MessageOut(stmt.message, payload, stmt.target))

        elif isinstance(stmt, TransferStmt):
            for record in bindings.messages.get(stmt.message, []):
                snapshot, delta = snapshot.insert(stmt.store, dict(record))
                effects.append(StoreChanged(stmt.store, delta))

        else:
            raise SchemaViolation(f"unsupported statement {type(stmt).__name__}")

    return snapshot, effects
