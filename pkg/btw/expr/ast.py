"""Expression and action-statement trees.

Spans never take part in equality, so a reparsed tree compares equal to the
original regardless of layout."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from btw.errors import NO_SPAN, SourceSpan
from btw.expr.values import Value


def span_field():
    return field(default=NO_SPAN, compare=False, repr=False)


# --- Expressions ---

@dataclass
class Literal:
    value: Value
    span: SourceSpan = span_field()


@dataclass
class Var:
    name: str
    span: SourceSpan = span_field()


@dataclass
class MsgRef:
    """Payload record of the most recent receipt of a message type."""

    message: str
    span: SourceSpan = span_field()


@dataclass
class Field:
    base: "Expr"
    name: str
    # Set by the type checker when the field holds a ref into another store
    ref_store: str | None = field(default=None, compare=False, repr=False)
    span: SourceSpan = span_field()


@dataclass
class Unary:
    op: str
    operand: "Expr"
    span: SourceSpan = span_field()


@dataclass
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: SourceSpan = span_field()


@dataclass
class Quantifier:
    kind: str  # exists | forall
    var: str
    store: str
    body: "Expr"
    span: SourceSpan = span_field()


@dataclass
class Call:
    func: str
    arg: str | None = None
    span: SourceSpan = span_field()


Expr = Union[Literal, Var, MsgRef, Field, Unary, Binary, Quantifier, Call]

ENTITY_FUNCTIONS = {"start_date", "end_date", "start_time", "end_time", "started", "ended"}
MESSAGE_FUNCTIONS = {"send_date", "rec_date", "send_time", "rec_time"}
STATE_FUNCTIONS = {"state_entered"}
CLOCK_FUNCTIONS = {"now", "today"}
TEMPORAL_FUNCTIONS = ENTITY_FUNCTIONS | MESSAGE_FUNCTIONS | STATE_FUNCTIONS | CLOCK_FUNCTIONS

BINARY_PRECEDENCE = {
    "or": 1,
    "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6,
}


# --- Action statements ---

@dataclass
class Counterpart:
    kind: str  # service | entity | remote
    name: str | None = None

    def __str__(self) -> str:
        if self.kind == "service":
            return "service"
        if self.kind == "remote":
            return f"remote \"{self.name}\""
        return f"\"{self.name}\""


@dataclass
class Assignment:
    name: str
    value: Expr
    span: SourceSpan = span_field()


@dataclass
class AddStmt:
    store: str
    assignments: list[Assignment]
    span: SourceSpan = span_field()


@dataclass
class RemoveStmt:
    var: str
    store: str
    where: Expr
    span: SourceSpan = span_field()


@dataclass
class UpdateStmt:
    var: str
    store: str
    where: Expr
    assignments: list[Assignment]
    span: SourceSpan = span_field()


@dataclass
class SetStmt:
    name: str
    value: Expr
    span: SourceSpan = span_field()


@dataclass
class SendStmt:
    message: str
    assignments: list[Assignment] | None
    target: Counterpart
    span: SourceSpan = span_field()


@dataclass
class SendEachStmt:
    message: str
    var: str
    store: str
    where: Expr | None
    target: Counterpart
    assignments: list[Assignment] | None
    span: SourceSpan = span_field()


@dataclass
class TransferStmt:
    message: str
    store: str
    span: SourceSpan = span_field()


Stmt = Union[AddStmt, RemoveStmt, UpdateStmt, SetStmt, SendStmt, SendEachStmt, TransferStmt]

WRITE_STATEMENTS = (AddStmt, RemoveStmt, UpdateStmt, SetStmt, TransferStmt)


def walk(expr: Expr):
    """Yield every node of an expression tree, parents first."""
    yield expr
    if isinstance(expr, Field):
        yield from walk(expr.base)
    elif isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Quantifier):
        yield from walk(expr.body)


def uses_temporal(expr: Expr | None) -> bool:
    return expr is not None and any(
        isinstance(node, Call) and node.func in TEMPORAL_FUNCTIONS for node in walk(expr)
    )


def is_temporal_only(expr: Expr) -> bool:
    """True when the expression uses nothing but temporal calls, literals and operators."""
    return all(isinstance(node, (Literal, Call, Unary, Binary)) for node in walk(expr))
