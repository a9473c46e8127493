"""Evaluation of typed expressions over a store snapshot and temporal index."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from btw.errors import ExpressionError, MissingTemporalFact, UnboundVariable
from btw.expr.ast import Binary, Call, Expr, Field, Literal, MsgRef, Quantifier, Unary, Var, is_temporal_only
from btw.expr.snapshot import StoreSnapshot
from btw.expr.temporal import TemporalIndex
from btw.expr.values import DAY, Date, RecordRef, TimeOfDay, Timestamp, Value, add, multiply, subtract

logger = logging.getLogger(__name__)


@dataclass
class Bindings:
    """Everything an expression can see besides the stores."""

    # variable name -> scope key holding it, nearest declaration first
    var_scopes: dict[str, str] = field(default_factory=dict)
    # message type -> payload records of its most recent receipt
    messages: dict[str, list[dict]] = field(default_factory=dict)
    clock: int = 0
    entity: str | None = None
    # entity whose start is being attempted; its start time reads as `now`
    starting: str | None = None
    is_decision: bool = False
    temporal: TemporalIndex | None = None
    locals: dict[str, Value] = field(default_factory=dict)

    def bind(self, name: str, value: Value) -> Bindings:
        return replace(self, locals={**self.locals, name: value})


def evaluate(expr: Expr, snapshot: StoreSnapshot, temporal: TemporalIndex | None, bindings: Bindings) -> Value:
    if isinstance(expr, Literal):
        return expr.value

    if isinstance(expr, Var):
        if expr.name in bindings.locals:
            return bindings.locals[expr.name]
        scope = bindings.var_scopes.get(expr.name)
        if scope is None:
            raise UnboundVariable(f"variable '{expr.name}' is not bound")
        return snapshot.variable(scope, expr.name)

    if isinstance(expr, MsgRef):
        records = bindings.messages.get(expr.message)
        if not records:
            raise MissingTemporalFact(f"message '{expr.message}' has not been received")
        return records[0]

    if isinstance(expr, Field):
        base = evaluate(expr.base, snapshot, temporal, bindings)
        if isinstance(base, RecordRef):
            base = snapshot.lookup_key(base.store, base.key)
        if base is None:
            return None
        if not isinstance(base, dict):
            raise ExpressionError(f"cannot project field '{expr.name}' from {base!r}")
        value = base.get(expr.name)
        if expr.ref_store and value is not None and not isinstance(value, RecordRef):
            value = RecordRef(expr.ref_store, value)
        return value

    if isinstance(expr, Unary):
        value = evaluate(expr.operand, snapshot, temporal, bindings)
        if expr.op == "not":
            return not value
        return subtract(0, value) if isinstance(value, int) else multiply(value, -1)

    if isinstance(expr, Binary):
        return _binary(expr, snapshot, temporal, bindings)

    if isinstance(expr, Quantifier):
        results = (
            evaluate(expr.body, snapshot, temporal, bindings.bind(expr.var, record))
            for record in snapshot.records(expr.store)
        )
        return any(results) if expr.kind == "exists" else all(results)

    if isinstance(expr, Call):
        return _temporal_call(expr, temporal if temporal is not None else bindings.temporal, bindings)

    raise ExpressionError(f"cannot evaluate {type(expr).__name__}")


def _binary(expr: Binary, snapshot, temporal, bindings) -> Value:
    op = expr.op
    left = evaluate(expr.left, snapshot, temporal, bindings)
    if op == "and":
        return bool(left) and bool(evaluate(expr.right, snapshot, temporal, bindings))
    if op == "or":
        return bool(left) or bool(evaluate(expr.right, snapshot, temporal, bindings))

    right = evaluate(expr.right, snapshot, temporal, bindings)
    if isinstance(left, RecordRef) != isinstance(right, RecordRef):
        left = left.key if isinstance(left, RecordRef) else left
        right = right.key if isinstance(right, RecordRef) else right
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op in ("<", "<=", ">", ">="):
        # Absent values never order
        if left is None or right is None:
            return False
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    if left is None or right is None:
        return None
    if op == "+":
        return add(left, right)
    if op == "-":
        return subtract(left, right)
    if op == "*":
        return multiply(left, right)
    raise ExpressionError(f"unknown operator '{op}'")


def _temporal_call(call: Call, temporal: TemporalIndex | None, bindings: Bindings) -> Value:
    clock = bindings.clock
    if call.func == "now":
        return Timestamp(clock)
    if call.func == "today":
        return Date(clock // DAY)
    if temporal is None:
        raise MissingTemporalFact(f"{call.func}() needs execution statistics")

    name = call.arg
    if call.func == "started":
        return name == bindings.starting or temporal.has_started(name)
    if call.func == "ended":
        return temporal.has_ended(name)
    if call.func in ("start_date", "start_time"):
        seconds = clock if name == bindings.starting else temporal.last_completed(name).start
    elif call.func in ("end_date", "end_time"):
        seconds = temporal.last_completed(name).end
    elif call.func in ("send_date", "send_time"):
        seconds = temporal.last_send(name)
    elif call.func in ("rec_date", "rec_time"):
        seconds = temporal.last_receive(name)
    elif call.func == "state_entered":
        return Timestamp(temporal.state_entry(name))
    else:
        raise ExpressionError(f"unknown function '{call.func}'")

    if call.func.endswith("_date"):
        return Date(seconds // DAY)
    return TimeOfDay(seconds % DAY)


def eval_predicate(expr: Expr, snapshot: StoreSnapshot, temporal: TemporalIndex | None, bindings: Bindings) -> bool:
    value = evaluate(expr, snapshot, temporal, bindings)
    if not isinstance(value, bool):
        raise ExpressionError(f"predicate produced {value!r}, not a boolean")
    return value


def eval_condition(expr: Expr | None, snapshot: StoreSnapshot, temporal: TemporalIndex | None, bindings: Bindings) -> bool:
    """Pre-condition reading: absent conditions hold, missing temporal facts make them false.

    Constraints built only from temporal calls and literals go through `check_temporal`."""
    if expr is None:
        return True
    try:
        if temporal is not None and is_temporal_only(expr):
            return check_temporal(expr, temporal, bindings)
        return eval_predicate(expr, snapshot, temporal, bindings)
    except MissingTemporalFact as e:
        logger.debug(f"condition false for '{bindings.entity}': {e}")
        return False


def check_temporal(expr: Expr, temporal: TemporalIndex, bindings: Bindings | None = None) -> bool:
    """Decide a temporal constraint against the index alone. MissingTemporalFact propagates."""
    bindings = bindings or Bindings(temporal=temporal)
    return eval_predicate(expr, StoreSnapshot(), temporal, bindings)
