"""Recursive-descent parser for `.btw` specs.

Errors never raise out of `parse`: each failed statement yields one diagnostic
and the parser resynchronises at the next `;` or block boundary."""

from __future__ import annotations

import logging

from btw.dsl import ast
from btw.dsl.lexer import SYNTAX, Token, tokenize
from btw.errors import Diagnostic, Severity, SourceSpan
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
    TEMPORAL_FUNCTIONS,
    TransferStmt,
    Unary,
    UpdateStmt,
    Var,
)
from btw.expr.values import (
    SCALAR_TYPES,
    duration_of,
    is_duration_unit,
    parse_date,
    parse_time,
    parse_timestamp,
)

logger = logging.getLogger(__name__)

BIRTH = "<birth>"
DEATH = "<death>"

OUTCOMES = ("positive", "negative")
PROTOCOL_WORDS = ("fifo", "lifo", "random")
NATURES = ("material", "informational")
COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
EVENT_KINDS = (
    "msg_from", "msg_to", "db_state", "decision_end", "process_start", "process_end",
    "process_start_failed", "abort", "timer",
)


class ParseFailure(Exception):
    def __init__(self, message: str, span: SourceSpan, hint: str = ""):
        super().__init__(message)
        self.span = span
        self.hint = hint


class Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    # --- token helpers ---

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.tok
        if token.kind != "eof":
            self.pos += 1
        return token

    def at(self, kind: str, text: str | None = None) -> bool:
        return self.tok.is_(kind, text)

    def at_word(self, *words: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text in words

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.advance()
        return None

    def accept_word(self, word: str) -> bool:
        return self.accept("ident", word) is not None

    def fail(self, expected: str, hint: str = "") -> ParseFailure:
        return ParseFailure(f"expected {expected}, found {self.tok.describe()}", self.tok.span, hint)

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        if not self.at(kind, text):
            raise self.fail(what or (f"'{text}'" if text else kind))
        return self.advance()

    def expect_word(self, *words: str) -> str:
        if not self.at_word(*words):
            raise self.fail(" or ".join(f"'{w}'" for w in words))
        return self.advance().text

    def name(self, what: str = "a quoted name") -> str:
        return self.expect("name", what=what).value

    def names(self) -> list[str]:
        result = [self.name()]
        while self.accept("punct", ","):
            result.append(self.name())
        return result

    def end(self) -> None:
        self.expect("punct", ";", what="';'")

    def span_from(self, start: Token) -> SourceSpan:
        last = self.tokens[max(self.pos - 1, 0)]
        return start.span.merge(last.span)

    # --- recovery ---

    def report(self, failure: ParseFailure) -> None:
        self.diagnostics.append(Diagnostic(SYNTAX, Severity.ERROR, str(failure), failure.span, hint=failure.hint))

    def synchronize(self) -> None:
        """Skip the rest of a broken statement: up to `;`, over one balanced block, or to a closing brace."""
        while not self.at("eof"):
            if self.at("punct", ";"):
                self.advance()
                return
            if self.at("punct", "}"):
                return
            if self.at("punct", "{"):
                self.skip_block()
                self.accept("punct", ";")
                return
            self.advance()

    def skip_block(self) -> None:
        depth = 0
        while not self.at("eof"):
            token = self.advance()
            if token.is_("punct", "{"):
                depth += 1
            elif token.is_("punct", "}"):
                depth -= 1
                if depth == 0:
                    return

    def block(self, item, hint: str = "") -> list:
        """Parse `{ item* }`, recovering per item."""
        self.expect("punct", "{", what="'{'")
        items = []
        while not self.at("punct", "}") and not self.at("eof"):
            start = self.pos
            try:
                items.append(item())
            except ParseFailure as failure:
                if hint and not failure.hint:
                    failure.hint = hint
                self.report(failure)
                self.synchronize()
                if self.pos == start:
                    self.advance()
        self.expect("punct", "}", what="'}'")
        return items

    # --- top level ---

    def spec(self) -> ast.SpecAst | None:
        start = self.tok
        scope = None
        result = ast.SpecAst(scope=None)
        while not self.at("eof"):
            begin = self.pos
            try:
                if scope is None:
                    if not self.at_word("scope"):
                        raise self.fail("scope block", "a spec starts with `scope \"Name\" { ... }`")
                    scope = self.scope_block()
                elif self.at_word("schema"):
                    result.schemas.append(self.schema())
                elif self.at_word("model"):
                    result.models.append(self.model())
                elif self.at_word("service"):
                    result.services.append(self.service_model())
                elif self.at_word("recovery"):
                    result.recoveries.append(self.recovery())
                elif self.at_word("scope"):
                    raise ParseFailure("only one scope block is allowed", self.tok.span)
                else:
                    raise self.fail("'schema', 'model', 'service' or 'recovery'")
            except ParseFailure as failure:
                self.report(failure)
                self.synchronize()
                if self.pos == begin:
                    self.advance()
        if scope is None:
            if not self.diagnostics:
                self.report(self.fail("scope block", "a spec starts with `scope \"Name\" { ... }`"))
            return None
        result.scope = scope
        result.span = self.span_from(start)
        return result

    def scope_block(self) -> ast.ScopeBlock:
        start = self.advance()
        name = self.name()
        items = self.block(self.scope_item)
        return ast.ScopeBlock(name, items, self.span_from(start))

    def scope_item(self):
        start = self.tok
        word = self.expect_word(
            "orgunit", "actor", "role", "assign", "undertake", "structure",
            "service", "message", "objtype", "store", "buffer",
        )
        name = self.name()
        if word == "orgunit":
            parent = self.name() if self.accept_word("sub_of") else None
            self.end()
            return ast.OrgUnitDecl(name, parent, self.span_from(start))
        if word == "actor":
            unit = self.name() if self.accept_word("in") else None
            self.end()
            return ast.ActorDecl(name, unit, self.span_from(start))
        if word == "role":
            self.end()
            return ast.RoleDecl(name, self.span_from(start))
        if word == "assign":
            self.expect_word("to")
            role = self.name()
            self.end()
            return ast.AssignDecl(name, role, self.span_from(start))
        if word == "undertake":
            process = self.name()
            self.end()
            return ast.UndertakeDecl(name, process, self.span_from(start))
        if word == "structure":
            self.expect_word("contains")
            concept = self.name()
            self.end()
            return ast.StructureDecl(name, concept, self.span_from(start))
        if word == "service":
            external = self.accept_word("external")
            self.end()
            return ast.ServiceDecl(name, external, self.span_from(start))
        if word == "message":
            external = self.accept_word("external")
            schema = self.name() if self.accept_word("schema") else None
            self.end()
            return ast.MessageDecl(name, external, schema, self.span_from(start))
        if word == "objtype":
            nature = self.expect_word(*NATURES)
            schema = self.name() if self.accept_word("schema") else None
            self.end()
            return ast.ObjTypeDecl(name, nature, schema, self.span_from(start))
        if word == "store":
            nature = self.advance().text if self.at_word(*NATURES) else None
            schema = self.name() if self.accept_word("schema") else None
            holds = self.names() if self.accept_word("holds") else []
            fragment = self.name() if self.accept_word("fragment") else None
            self.end()
            return ast.StoreDecl(name, nature, schema, holds, fragment, self.span_from(start))

        self.expect_word("protocol")
        predicate = None
        if self.accept_word("predicate"):
            self.expect("punct", "(")
            predicate = self.expr()
            self.expect("punct", ")")
            protocol = "predicate"
        else:
            protocol = self.expect_word(*PROTOCOL_WORDS)
        holds = self.names() if self.accept_word("holds") else []
        self.end()
        return ast.BufferDecl(name, protocol, predicate, holds, self.span_from(start))

    def schema(self) -> ast.SchemaDecl:
        start = self.advance()
        name = self.name()
        fields = self.block(self.field_decl)
        return ast.SchemaDecl(name, fields, self.span_from(start))

    def type_ref(self) -> tuple[str, str | None]:
        if self.accept_word("ref"):
            return "ref", self.name("a store name")
        if not self.at_word(*SCALAR_TYPES):
            raise self.fail("a field kind", "bool, int, text, date, time, timestamp, duration or ref \"Store\"")
        return self.advance().text, None

    def field_decl(self) -> ast.FieldDecl:
        start = self.expect("ident", what="a field name")
        self.expect("punct", ":")
        kind, target = self.type_ref()
        self.end()
        return ast.FieldDecl(start.text, kind, target, self.span_from(start))

    # --- process models ---

    def model(self) -> ast.ModelDecl:
        start = self.advance()
        name = self.name()
        entities = self.block(self.entity_decl)
        return ast.ModelDecl(name, entities, self.span_from(start))

    def entity_decl(self) -> ast.EntityDecl:
        start = self.tok
        kind = self.expect_word("process", "decision", "sync")
        name = self.name()
        if kind != "sync" and self.at("punct", "{"):
            clauses = self.block(self.clause)
            return ast.EntityDecl(kind, name, clauses, self.span_from(start))
        self.end()
        return ast.EntityDecl(kind, name, None, self.span_from(start))

    def amount(self) -> int:
        value = self.expect("int", what="an amount").value
        if self.tok.kind == "ident" and is_duration_unit(self.tok.text):
            return duration_of(value, self.advance().text).total
        return value

    def counterpart(self) -> Counterpart:
        if self.accept_word("service"):
            return Counterpart("service")
        if self.accept_word("remote"):
            return Counterpart("remote", self.name("a service name"))
        if self.at("name"):
            return Counterpart("entity", self.name())
        raise self.fail("'service', 'remote \"S\"' or an entity name")

    def clause(self):
        start = self.tok
        if self.at_word("process", "decision") or (self.at_word("sync") and self.peek().kind == "name"):
            return self.entity_decl()

        word = self.expect_word(
            "initial", "trigger", "store", "buffer", "var", "commit", "role", "exclusive",
            "duration", "timeout", "pre", "post", "positive", "negative", "hci", "action",
            "receive", "send", "take", "put", "sync", "terminate", "abort", "combine",
        )

        if word == "initial":
            names = self.names()
            self.end()
            return ast.InitialClause(names, self.span_from(start))
        if word == "trigger":
            source = self.name()
            outcome = self.advance().text if self.at_word(*OUTCOMES) else None
            self.expect("punct", "->")
            target = self.name()
            self.end()
            return ast.TriggerClause(source, target, outcome, self.span_from(start))
        if word in ("store", "buffer"):
            name = self.name()
            self.end()
            node = ast.StoreRef if word == "store" else ast.BufferRef
            return node(name, self.span_from(start))
        if word == "var":
            name = self.expect("ident", what="a variable name").text
            self.expect("punct", ":")
            kind, target = self.type_ref()
            init = self.expr() if self.accept("punct", "=") else None
            self.end()
            return ast.VarDecl(name, kind, target, init, self.span_from(start))
        if word == "commit":
            group = self.name()
            self.expect("punct", "{")
            members = self.names()
            self.expect("punct", "}")
            return ast.CommitClause(group, members, self.span_from(start))
        if word == "role":
            role = self.name()
            self.end()
            return ast.RoleClause(role, self.span_from(start))
        if word == "exclusive":
            self.end()
            return ast.FlagClause(word, self.span_from(start))
        if word in ("duration", "timeout"):
            seconds = self.amount()
            self.end()
            return ast.AmountClause(word, seconds, self.span_from(start))
        if word in ("pre", "post", "positive", "negative"):
            expr = self.expr()
            self.end()
            return ast.ConditionClause(word, expr, self.span_from(start))
        if word == "hci":
            name = self.name()
            schema = self.name() if self.accept_word("schema") else None
            self.end()
            return ast.HciClause(name, schema, self.span_from(start))
        if word == "action":
            statements = self.block(self.statement)
            return ast.ActionClause(statements, self.span_from(start))
        if word in ("receive", "send"):
            messages = self.names()
            self.expect_word("from" if word == "receive" else "to")
            counterpart = self.counterpart()
            self.end()
            return ast.MessagingClause(word, messages, counterpart, self.span_from(start))
        if word in ("take", "put"):
            message = self.name()
            self.expect_word("from" if word == "take" else "into")
            self.expect_word("buffer")
            buffer = self.name("a buffer name")
            self.end()
            return ast.MessagingClause(word, [message], Counterpart("buffer", buffer), self.span_from(start))
        if word == "sync":
            first = self.expect_word("send", "receive")
            if first == "send":
                sent = self.name()
                self.expect_word("to")
                counterpart = self.counterpart()
                self.expect_word("receive")
                received = self.name()
                self.end()
                return ast.SyncClause(sent, received, counterpart, True, self.span_from(start))
            received = self.name()
            self.expect_word("from")
            counterpart = self.counterpart()
            self.expect_word("send")
            sent = self.name()
            self.end()
            return ast.SyncClause(sent, received, counterpart, False, self.span_from(start))
        if word == "terminate":
            outcome = self.expect_word(*OUTCOMES)
            self.end()
            return ast.TerminateClause(outcome, self.span_from(start))
        if word == "abort":
            self.expect_word("on")
            on = self.expect_word(*OUTCOMES)
            as_ = self.expect_word(*OUTCOMES) if self.accept_word("as") else None
            self.end()
            return ast.AbortClause(on, as_, self.span_from(start))

        mode = self.expect_word("all", "any")
        self.end()
        return ast.CombineClause(mode, self.span_from(start))

    # --- action statements ---

    def assignments(self) -> list[Assignment]:
        self.expect("punct", "{")
        result = []
        if not self.at("punct", "}"):
            while True:
                start = self.expect("ident", what="a field name")
                self.expect("punct", "=")
                value = self.expr()
                result.append(Assignment(start.text, value, self.span_from(start)))
                if not self.accept("punct", ","):
                    break
        self.expect("punct", "}")
        return result

    def statement(self) -> Stmt:
        start = self.tok
        word = self.expect_word("add", "remove", "update", "set", "send", "transfer")
        if word == "add":
            store = self.name()
            assignments = self.assignments()
            self.end()
            return AddStmt(store, assignments, self.span_from(start))
        if word in ("remove", "update"):
            var = self.expect("ident", what="a variable name").text
            self.expect_word("in")
            store = self.name()
            self.expect_word("where")
            where = self.expr()
            if word == "remove":
                self.end()
                return RemoveStmt(var, store, where, self.span_from(start))
            self.expect_word("set")
            assignments = [self.assignment()]
            while self.accept("punct", ","):
                assignments.append(self.assignment())
            self.end()
            return UpdateStmt(var, store, where, assignments, self.span_from(start))
        if word == "set":
            name = self.expect("ident", what="a variable name").text
            self.expect("punct", "=")
            value = self.expr()
            self.end()
            return SetStmt(name, value, self.span_from(start))
        if word == "transfer":
            message = self.name()
            self.expect_word("into")
            store = self.name()
            self.end()
            return TransferStmt(message, store, self.span_from(start))

        message = self.name()
        payload = self.assignments() if self.at("punct", "{") else None
        self.expect_word("to")
        if payload is None and self.accept_word("each"):
            var = self.expect("ident", what="a variable name").text
            self.expect_word("in")
            store = self.name()
            where = self.expr() if self.accept_word("where") else None
            counterpart = self.counterpart()
            fields = self.assignments() if self.at("punct", "{") else None
            self.end()
            return SendEachStmt(message, var, store, where, counterpart, fields, self.span_from(start))
        counterpart = self.counterpart()
        self.end()
        return SendStmt(message, payload, counterpart, self.span_from(start))

    def assignment(self) -> Assignment:
        start = self.expect("ident", what="a field name")
        self.expect("punct", "=")
        value = self.expr()
        return Assignment(start.text, value, self.span_from(start))

    # --- expressions ---

    def expr(self, min_prec: int = 1) -> Expr:
        left = self.unary()
        while True:
            op = self.binary_op()
            if op is None:
                return left
            prec = BINARY_PRECEDENCE[op]
            if prec < min_prec:
                return left
            start = self.tok
            self.advance()
            # Comparisons do not chain
            right = self.expr(prec + 1)
            left = Binary(op, left, right, left.span.merge(self.span_from(start)))
            if op in COMPARISONS and self.binary_op() in COMPARISONS:
                raise self.fail("an operator other than a comparison", "parenthesize chained comparisons")

    def binary_op(self) -> str | None:
        token = self.tok
        if token.kind == "ident" and token.text in ("and", "or"):
            return token.text
        if token.kind == "punct" and token.text in BINARY_PRECEDENCE:
            return token.text
        return None

    def unary(self) -> Expr:
        start = self.tok
        if self.accept_word("not"):
            # `not` binds looser than comparisons
            operand = self.expr(BINARY_PRECEDENCE["=="])
            return Unary("not", operand, self.span_from(start))
        if self.accept("punct", "-"):
            operand = self.unary()
            return Unary("-", operand, self.span_from(start))
        return self.postfix()

    def postfix(self) -> Expr:
        start = self.tok
        node = self.primary()
        while self.accept("punct", "."):
            name = self.expect("ident", what="a field name").text
            node = Field(node, name, span=self.span_from(start))
        return node

    def primary(self) -> Expr:
        start = self.tok
        if self.accept("punct", "("):
            inner = self.expr()
            self.expect("punct", ")")
            return inner
        if self.at("int"):
            value = self.advance().value
            if self.tok.kind == "ident" and is_duration_unit(self.tok.text):
                return Literal(duration_of(value, self.advance().text), self.span_from(start))
            return Literal(value, self.span_from(start))
        if self.at("name"):
            return Literal(self.advance().value, self.span_from(start))
        if self.tok.kind != "ident":
            raise self.fail("an expression")

        word = self.tok.text
        if word in ("true", "false"):
            self.advance()
            return Literal(word == "true", self.span_from(start))
        if word in ("date", "time", "at") and self.peek().kind == "name":
            self.advance()
            text = self.advance().value
            convert = {"date": parse_date, "time": parse_time, "at": parse_timestamp}[word]
            try:
                value = convert(text)
            except ValueError:
                raise ParseFailure(f"malformed {word} literal \"{text}\"", self.span_from(start)) from None
            return Literal(value, self.span_from(start))
        if word == "msg" and self.peek().kind == "name":
            self.advance()
            return MsgRef(self.advance().value, self.span_from(start))
        if word in ("exists", "forall") and self.peek().kind == "ident":
            self.advance()
            var = self.advance().text
            self.expect_word("in")
            store = self.name("a store name")
            self.expect("punct", "(")
            body = self.expr()
            self.expect("punct", ")")
            return Quantifier(word, var, store, body, self.span_from(start))
        if word in TEMPORAL_FUNCTIONS and self.peek().is_("punct", "("):
            self.advance()
            self.advance()
            arg = None if self.at("punct", ")") else self.name()
            self.expect("punct", ")")
            return Call(word, arg, self.span_from(start))
        self.advance()
        return Var(word, self.span_from(start))

    # --- service model ---

    def service_model(self) -> ast.ServiceModelDecl:
        start = self.advance()
        name = self.name()
        items = self.block(self.service_item)
        states = [i for i in items if isinstance(i, ast.StateDecl)]
        transitions = [i for i in items if isinstance(i, ast.TransitionDecl)]
        return ast.ServiceModelDecl(name, states, transitions, self.span_from(start))

    def state_ref(self) -> str:
        if self.accept_word("birth"):
            return BIRTH
        if self.accept_word("death"):
            return DEATH
        return self.name("a state name, 'birth' or 'death'")

    def service_item(self):
        start = self.tok
        word = self.expect_word("state", "on")
        if word == "state":
            name = self.name()
            limit = None
            if self.accept_word("max"):
                value = self.expect("int", what="an amount").value
                if self.tok.kind != "ident" or not is_duration_unit(self.tok.text):
                    raise self.fail("a duration unit", "seconds, minutes, hours, days, weeks, months or years")
                limit = duration_of(value, self.advance().text)
            self.end()
            return ast.StateDecl(name, limit, self.span_from(start))

        source = self.state_ref()
        target = self.state_ref() if self.accept("punct", "->") else None
        self.expect_word("when")
        event = self.event()
        condition = self.expr() if self.accept_word("if") else None
        actions = []
        if self.accept_word("then"):
            actions.append(self.eca_action())
            while self.accept("punct", ","):
                actions.append(self.eca_action())
        self.end()
        return ast.TransitionDecl(source, event, target, condition, actions, self.span_from(start))

    def event(self) -> ast.EventSpec:
        start = self.tok
        kind = self.expect_word(*EVENT_KINDS)
        if kind in ("db_state", "timer"):
            return ast.EventSpec(kind, expr=self.expr(), span=self.span_from(start))
        if kind == "abort":
            return ast.EventSpec(kind, outcome=self.expect_word("failure", "nonfailure"), span=self.span_from(start))
        subject = self.name()
        if kind == "decision_end":
            outcome = self.expect_word(*OUTCOMES)
            return ast.EventSpec(kind, subject, outcome, span=self.span_from(start))
        if kind == "process_start_failed":
            threshold = self.expect("int", what="a failure count").value
            return ast.EventSpec(kind, subject, threshold=threshold, span=self.span_from(start))
        return ast.EventSpec(kind, subject, span=self.span_from(start))

    def eca_action(self) -> ast.ActionSpec:
        start = self.tok
        kind = self.expect_word("forward", "trigger", "send", "none")
        if kind == "none":
            return ast.ActionSpec(kind, span=self.span_from(start))
        if kind == "trigger":
            return ast.ActionSpec(kind, target=self.name(), span=self.span_from(start))
        message = self.name()
        self.expect_word("to")
        target = self.name()
        return ast.ActionSpec(kind, message, target, self.span_from(start))

    # --- recovery ---

    def recovery(self) -> ast.RecoveryDecl:
        start = self.advance()
        entries = self.block(self.recovery_entry)
        return ast.RecoveryDecl(entries, self.span_from(start))

    def recovery_entry(self) -> ast.RecoveryEntry:
        start = self.tok
        entity = self.name("an entity name")
        self.expect("punct", ":")
        ladder = None
        rollback = compensate = None
        if self.accept_word("redo"):
            self.expect("punct", "[")
            ladder = [self.rung()]
            while self.accept("punct", ","):
                ladder.append(self.rung())
            self.expect("punct", "]")
        if self.accept_word("rollback"):
            rollback = self.expect_word("undo", "null", "compensate")
            if rollback == "compensate":
                compensate = self.name("a compensating entity")
        if ladder is None and rollback is None:
            raise self.fail("'redo' or 'rollback'")
        self.end()
        return ast.RecoveryEntry(entity, ladder, rollback, compensate, self.span_from(start))

    def rung(self) -> ast.Rung:
        start = self.tok
        threshold = None if self.accept("punct", "*") else self.expect("int", what="a failure count or '*'").value
        self.expect("punct", "->")
        target = None if self.accept_word("self") else self.name("a contingency or 'self'")
        return ast.Rung(threshold, target, self.span_from(start))


def parse(text: str, filename: str = "<input>") -> ast.SpecAst | list[Diagnostic]:
    tokens, lexical = tokenize(text, filename)
    parser = Parser(tokens)
    spec = parser.spec()
    diagnostics = lexical + parser.diagnostics
    if diagnostics or spec is None:
        logger.debug(f"{filename}: {len(diagnostics)} syntax error(s)")
        return sorted(diagnostics, key=lambda d: (d.span.line, d.span.col))
    return spec
