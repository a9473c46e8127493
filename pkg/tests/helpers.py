"""Builders shared by the test modules."""

from __future__ import annotations

from pathlib import Path

from btw.config import FIXTURES_DIR
from btw.dsl import lower, parse
from btw.dsl.lexer import tokenize
from btw.dsl.parser import Parser
from btw.engine import init_instance, parse_scenario, run

ROAD_CLOSURES = FIXTURES_DIR / "road_closures.btw"
SCENARIOS = FIXTURES_DIR / "scenarios"
INVALID = Path(__file__).parent / "fixtures" / "invalid"

GO = '{"t": 0, "kind": "message", "target": "Go"}'

# A one-field store for tests that write records
LEDGER = 'store "Ledger" schema "Entry";'
ENTRY = 'schema "Entry" {\n  n: int;\n}\n'


def build(text: str, filename: str = "<test>"):
    """Parse and lower, failing the test on any diagnostic."""
    parsed = parse(text, filename)
    assert not isinstance(parsed, list), [d.to_text() for d in parsed]
    lowered = lower(parsed)
    assert not isinstance(lowered, list), [d.to_text() for d in lowered]
    return lowered


def expr(text: str):
    tokens, diagnostics = tokenize(text)
    assert not diagnostics
    parser = Parser(tokens)
    node = parser.expr()
    assert parser.at("eof"), f"trailing input after {text!r}"
    return node


def tiny(body: str, scope: str = "", tail: str = "", state: str = 'state "Working";', rules: str = "") -> str:
    """A one-model spec whose root process "Main" runs `body` once "Go" arrives.

    Built by concatenation: the spec text is full of braces."""
    return (
        'scope "Tiny" {\n'
        '  service "Desk";\n'
        '  message "Go" external;\n'
        + scope + "\n"
        "}\n"
        'model "Work" {\n'
        '  process "Main" {\n'
        + body + "\n"
        "  }\n"
        "}\n"
        'service "Desk" {\n'
        "  " + state + "\n"
        '  on birth -> "Working" when msg_from "Go" then trigger "Main";\n'
        '  on "Working" -> death when process_end "Main";\n'
        + rules + "\n"
        "}\n"
        + tail
    )


def start(text: str, lines: list[str] | None = None, seed: int = 0):
    registry, model = build(text)
    scenario = parse_scenario(lines if lines is not None else [GO])
    return init_instance(model, registry, scenario, seed)


def simulate(text: str, lines: list[str] | None = None, seed: int = 0):
    return run(start(text, lines, seed))


def names(trace, kind) -> list[str]:
    return [e.subject[0] for e in trace if e.kind is kind]


def entries(trace, kind, subject: str | None = None):
    return [e for e in trace if e.kind is kind and (subject is None or e.subject[0] == subject)]
