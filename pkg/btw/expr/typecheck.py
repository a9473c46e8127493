"""Static typing of expressions and action statements against declared schemas.

Runs during lowering; a checked expression cannot meet a kind error when it is
evaluated. Field nodes that hold references are annotated with their target
store so the evaluator can navigate them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from btw.errors import Diagnostic, NO_SPAN, Severity, SourceSpan
from btw.expr.ast import (
    AddStmt,
    Assignment,
    Binary,
    Call,
    CLOCK_FUNCTIONS,
    ENTITY_FUNCTIONS,
    Expr,
    Field,
    Literal,
    MESSAGE_FUNCTIONS,
    MsgRef,
    Quantifier,
    RemoveStmt,
    SendEachStmt,
    SendStmt,
    SetStmt,
    STATE_FUNCTIONS,
    Stmt,
    TransferStmt,
    Unary,
    UpdateStmt,
    Var,
)
from btw.expr.values import (
    BOOL,
    DATE,
    DURATION,
    INT,
    TEXT,
    TIME,
    TIMESTAMP,
    ExprType,
    ValueKind,
    kind_of,
)

UNRESOLVED = "E201"
MISMATCH = "E202"

ORDERED_KINDS = {
    ValueKind.INT, ValueKind.TEXT, ValueKind.DATE, ValueKind.TIME, ValueKind.TIMESTAMP, ValueKind.DURATION,
}

_ARITHMETIC = {
    ("+", ValueKind.INT, ValueKind.INT): INT,
    ("+", ValueKind.TEXT, ValueKind.TEXT): TEXT,
    ("+", ValueKind.DATE, ValueKind.DURATION): DATE,
    ("+", ValueKind.DURATION, ValueKind.DATE): DATE,
    ("+", ValueKind.TIMESTAMP, ValueKind.DURATION): TIMESTAMP,
    ("+", ValueKind.DURATION, ValueKind.TIMESTAMP): TIMESTAMP,
    ("+", ValueKind.DURATION, ValueKind.DURATION): DURATION,
    ("-", ValueKind.INT, ValueKind.INT): INT,
    ("-", ValueKind.DATE, ValueKind.DURATION): DATE,
    ("-", ValueKind.DATE, ValueKind.DATE): DURATION,
    ("-", ValueKind.TIMESTAMP, ValueKind.DURATION): TIMESTAMP,
    ("-", ValueKind.TIMESTAMP, ValueKind.TIMESTAMP): DURATION,
    ("-", ValueKind.DURATION, ValueKind.DURATION): DURATION,
    ("*", ValueKind.INT, ValueKind.INT): INT,
    ("*", ValueKind.DURATION, ValueKind.INT): DURATION,
    ("*", ValueKind.INT, ValueKind.DURATION): DURATION,
}


class TypeCheckFailure(Exception):
    def __init__(self, code: str, message: str, span: SourceSpan):
        super().__init__(message)
        self.diagnostic = Diagnostic(code, Severity.ERROR, message, span)


@dataclass
class TypeEnv:
    variables: dict[str, ExprType] = field(default_factory=dict)
    # record key -> field types; stores use their name, messages "msg:<name>"
    records: dict[str, dict[str, ExprType]] = field(default_factory=dict)
    stores: set[str] = field(default_factory=set)
    messages: set[str] = field(default_factory=set)
    entities: set[str] = field(default_factory=set)
    states: set[str] = field(default_factory=set)
    locals: dict[str, ExprType] = field(default_factory=dict)

    def bind(self, name: str, t: ExprType) -> TypeEnv:
        return replace(self, locals={**self.locals, name: t})

    def fields(self, t: ExprType) -> dict[str, ExprType]:
        return self.records.get(t.target, {})


def store_record(store: str) -> ExprType:
    return ExprType(ValueKind.RECORD, store)


def message_record(message: str) -> ExprType:
    return ExprType(ValueKind.RECORD, f"msg:{message}")


def _fail(code: str, message: str, node) -> TypeCheckFailure:
    return TypeCheckFailure(code, message, getattr(node, "span", NO_SPAN))


def assignable(target: ExprType, value: ExprType) -> bool:
    if target == value:
        return True
    if target.kind is ValueKind.REF:
        return value.kind in (ValueKind.TEXT, ValueKind.INT) or (
            value.kind is ValueKind.REF and value.target == target.target
        )
    return False


def comparable(left: ExprType, right: ExprType) -> bool:
    if left == right:
        return True
    if ValueKind.REF in (left.kind, right.kind):
        other = right if left.kind is ValueKind.REF else left
        return other.kind in (ValueKind.TEXT, ValueKind.INT, ValueKind.REF)
    return False


def type_of(expr: Expr, env: TypeEnv) -> ExprType:
    if isinstance(expr, Literal):
        kind = kind_of(expr.value)
        if kind is None:
            raise _fail(MISMATCH, f"unsupported literal {expr.value!r}", expr)
        return ExprType(kind)

    if isinstance(expr, Var):
        if expr.name in env.locals:
            return env.locals[expr.name]
        if expr.name in env.variables:
            return env.variables[expr.name]
        raise _fail(UNRESOLVED, f"unknown variable '{expr.name}'", expr)

    if isinstance(expr, MsgRef):
        if expr.message not in env.messages:
            raise _fail(UNRESOLVED, f"unknown message type '{expr.message}'", expr)
        return message_record(expr.message)

    if isinstance(expr, Field):
        base = type_of(expr.base, env)
        if base.kind not in (ValueKind.RECORD, ValueKind.REF):
            raise _fail(MISMATCH, f"cannot project '{expr.name}' from a {base} value", expr)
        fields = env.fields(base)
        if expr.name not in fields:
            raise _fail(MISMATCH, f"'{base.target}' has no field '{expr.name}'", expr)
        result = fields[expr.name]
        expr.ref_store = result.target if result.kind is ValueKind.REF else None
        return result

    if isinstance(expr, Unary):
        operand = type_of(expr.operand, env)
        if expr.op == "not":
            _expect(operand, BOOL, expr.operand)
            return BOOL
        if operand not in (INT, DURATION):
            raise _fail(MISMATCH, f"cannot negate a {operand} value", expr)
        return operand

    if isinstance(expr, Binary):
        return _binary_type(expr, env)

    if isinstance(expr, Quantifier):
        if expr.store not in env.stores:
            raise _fail(UNRESOLVED, f"unknown store '{expr.store}'", expr)
        body = type_of(expr.body, env.bind(expr.var, store_record(expr.store)))
        _expect(body, BOOL, expr.body)
        return BOOL

    if isinstance(expr, Call):
        return _call_type(expr, env)

    raise _fail(MISMATCH, f"unsupported expression {type(expr).__name__}", expr)


def _expect(actual: ExprType, expected: ExprType, node) -> None:
    if actual != expected:
        raise _fail(MISMATCH, f"expected {expected}, found {actual}", node)


def _binary_type(expr: Binary, env: TypeEnv) -> ExprType:
    left = type_of(expr.left, env)
    right = type_of(expr.right, env)
    op = expr.op
    if op in ("and", "or"):
        _expect(left, BOOL, expr.left)
        _expect(right, BOOL, expr.right)
        return BOOL
    if op in ("==", "!="):
        if not comparable(left, right):
            raise _fail(MISMATCH, f"cannot compare {left} with {right}", expr)
        return BOOL
    if op in ("<", "<=", ">", ">="):
        if left != right or left.kind not in ORDERED_KINDS:
            raise _fail(MISMATCH, f"cannot order {left} against {right}", expr)
        return BOOL
    result = _ARITHMETIC.get((op, left.kind, right.kind))
    if result is None:
        raise _fail(MISMATCH, f"operator '{op}' does not apply to {left} and {right}", expr)
    return result


def _call_type(call: Call, env: TypeEnv) -> ExprType:
    if call.func in CLOCK_FUNCTIONS:
        return TIMESTAMP if call.func == "now" else DATE
    if call.func in ENTITY_FUNCTIONS:
        if call.arg not in env.entities:
            raise _fail(UNRESOLVED, f"unknown process entity '{call.arg}'", call)
        if call.func in ("started", "ended"):
            return BOOL
    elif call.func in MESSAGE_FUNCTIONS:
        if call.arg not in env.messages:
            raise _fail(UNRESOLVED, f"unknown message type '{call.arg}'", call)
    elif call.func in STATE_FUNCTIONS:
        if call.arg not in env.states:
            raise _fail(UNRESOLVED, f"unknown service state '{call.arg}'", call)
        return TIMESTAMP
    else:
        raise _fail(UNRESOLVED, f"unknown function '{call.func}'", call)
    return DATE if call.func.endswith("_date") else TIME


def check_predicate(expr: Expr, env: TypeEnv) -> list[Diagnostic]:
    try:
        _expect(type_of(expr, env), BOOL, expr)
    except TypeCheckFailure as e:
        return [e.diagnostic]
    return []


def check_expression(expr: Expr, env: TypeEnv, expected: ExprType | None = None) -> list[Diagnostic]:
    try:
        actual = type_of(expr, env)
        if expected is not None and not assignable(expected, actual):
            raise _fail(MISMATCH, f"expected {expected}, found {actual}", expr)
    except TypeCheckFailure as e:
        return [e.diagnostic]
    return []


def _check_assignments(assignments: list[Assignment], fields: dict[str, ExprType], owner: str, env: TypeEnv):
    for a in assignments:
        if a.name not in fields:
            raise _fail(MISMATCH, f"'{owner}' has no field '{a.name}'", a)
        actual = type_of(a.value, env)
        if not assignable(fields[a.name], actual):
            raise _fail(MISMATCH, f"field '{a.name}' of '{owner}' expects {fields[a.name]}, found {actual}", a.value)


def _require_store(store: str, env: TypeEnv, node) -> dict[str, ExprType]:
    if store not in env.stores:
        raise _fail(UNRESOLVED, f"unknown store '{store}'", node)
    return env.records[store]


def _require_message(message: str, env: TypeEnv, node) -> dict[str, ExprType]:
    if message not in env.messages:
        raise _fail(UNRESOLVED, f"unknown message type '{message}'", node)
    return env.records.get(f"msg:{message}", {})


def check_statement(stmt: Stmt, env: TypeEnv) -> list[Diagnostic]:
    try:
        if isinstance(stmt, AddStmt):
            _check_assignments(stmt.assignments, _require_store(stmt.store, env, stmt), stmt.store, env)

        elif isinstance(stmt, (RemoveStmt, UpdateStmt)):
            fields = _require_store(stmt.store, env, stmt)
            scoped = env.bind(stmt.var, store_record(stmt.store))
            _expect(type_of(stmt.where, scoped), BOOL, stmt.where)
            if isinstance(stmt, UpdateStmt):
                _check_assignments(stmt.assignments, fields, stmt.store, scoped)

        elif isinstance(stmt, SetStmt):
            if stmt.name not in env.variables:
                raise _fail(UNRESOLVED, f"unknown variable '{stmt.name}'", stmt)
            actual = type_of(stmt.value, env)
            if not assignable(env.variables[stmt.name], actual):
                raise _fail(MISMATCH, f"variable '{stmt.name}' is {env.variables[stmt.name]}, found {actual}", stmt.value)

        elif isinstance(stmt, SendStmt):
            fields = _require_message(stmt.message, env, stmt)
            if stmt.assignments is not None:
                _check_assignments(stmt.assignments, fields, stmt.message, env)

        elif isinstance(stmt, SendEachStmt):
            _require_store(stmt.store, env, stmt)
            fields = _require_message(stmt.message, env, stmt)
            scoped = env.bind(stmt.var, store_record(stmt.store))
            if stmt.where is not None:
                _expect(type_of(stmt.where, scoped), BOOL, stmt.where)
            if stmt.assignments is not None:
                _check_assignments(stmt.assignments, fields, stmt.message, scoped)

        elif isinstance(stmt, TransferStmt):
            source = _require_message(stmt.message, env, stmt)
            target = _require_store(stmt.store, env, stmt)
            for name, t in source.items():
                if name not in target or not assignable(target[name], t):
                    raise _fail(
                        MISMATCH,
                        f"message '{stmt.message}' field '{name}' has no compatible field in store '{stmt.store}'",
                        stmt,
                    )
    except TypeCheckFailure as e:
        return [e.diagnostic]
    return []
