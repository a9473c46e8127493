from itertools import product

import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from btw.config import settings
from btw.engine import TraceKind, evaluate_decision, run
from btw.errors import StuckState

from helpers import GO, entries, expr, names, simulate, start, tiny


def pick(positive: str, negative: str) -> str:
    return (
        'initial "Pick?";\n'
        f'decision "Pick?" {{ positive {positive}; negative {negative}; }}\n'
        'process "Yes" { duration 1 second; }\n'
        'process "No" { duration 2 seconds; }\n'
        'trigger "Pick?" positive -> "Yes";\n'
        'trigger "Pick?" negative -> "No";'
    )


def network(combine: str, first: str = "positive", second: str = "negative") -> str:
    def rules(outcome: str) -> str:
        return "positive true; negative false;" if outcome == "positive" else "positive false; negative true;"

    return (
        'initial "Check?";\n'
        'decision "Check?" {\n'
        '  initial "First?", "Second?";\n'
        f"  combine {combine};\n"
        f'  decision "First?" {{ {rules(first)} }}\n'
        f'  decision "Second?" {{ {rules(second)} }}\n'
        "}\n"
        'process "Yes" { duration 1 second; }\n'
        'process "No" { duration 1 second; }\n'
        'trigger "Check?" positive -> "Yes";\n'
        'trigger "Check?" negative -> "No";'
    )


def outcome_of(trace, name: str) -> dict:
    [entry] = entries(trace, TraceKind.DECISION_OUTCOME, name)
    return entry.detail


def test_one_rule_holds():
    state, trace = simulate(tiny(pick("true", "false")))
    assert outcome_of(trace, "Pick?") == {"outcome": "positive", "via": "rule", "occurrence": 1}
    assert "Yes" in names(trace, TraceKind.ENTITY_COMPLETED)
    assert "No" not in names(trace, TraceKind.ENTITY_STARTED)
    assert state.clock == 1


def test_override_settles_a_tie():
    override = '{"t": 0, "kind": "override", "target": "Pick?", "payload": {"outcome": "negative"}}'
    state, trace = simulate(tiny(pick("true", "true")), [GO, override])
    assert outcome_of(trace, "Pick?") == {"outcome": "negative", "via": "override", "occurrence": 1}
    assert state.clock == 2


def test_tie_without_override_is_drawn_from_the_seed():
    text = tiny(pick("true", "true"))
    drawn = {}
    for seed in range(16):
        _, trace = simulate(text, seed=seed)
        detail = outcome_of(trace, "Pick?")
        assert detail["via"] == "draw"
        drawn[seed] = detail["outcome"]
    assert set(drawn.values()) == {"positive", "negative"}
    _, again = simulate(text, seed=3)
    assert outcome_of(again, "Pick?")["outcome"] == drawn[3]


def test_no_rule_holds_aborts():
    with pytest.raises(StuckState) as info:
        simulate(tiny(pick("false", "false")))
    trace = info.value.trace
    assert outcome_of(trace, "Pick?") == {"outcome": "abort", "via": "none", "occurrence": 1}
    [abort] = entries(trace, TraceKind.ABORT_RAISED)
    assert abort.detail == {"kind": "nonfailure", "reason": "no decision rule holds"}


@pytest.mark.parametrize("combine, outcome, runs", [("all", "negative", "No"), ("any", "positive", "Yes")])
def test_network_combines_terminal_outcomes(combine, outcome, runs):
    _, trace = simulate(tiny(network(combine)))
    assert [e.subject[0] for e in entries(trace, TraceKind.DECISION_OUTCOME)] == ["First?", "Second?", "Check?"]
    assert outcome_of(trace, "Check?")["outcome"] == outcome
    assert outcome_of(trace, "Check?")["via"] == f"combine:{combine}"
    assert runs in names(trace, TraceKind.ENTITY_STARTED)


def test_network_of_agreeing_decisions():
    _, trace = simulate(tiny(network("all", "positive", "positive")))
    assert outcome_of(trace, "Check?")["outcome"] == "positive"


def test_aborting_sub_decision_decides_the_network():
    text = tiny(network("all").replace(
        'decision "First?" { positive true; negative false; }',
        'decision "First?" { positive true; negative false; abort on positive as negative; }',
    ))
    _, trace = simulate(text)
    assert outcome_of(trace, "Check?") == {"outcome": "negative", "via": "abort:First?", "occurrence": 1}
    assert "Second?" not in [e.subject[0] for e in entries(trace, TraceKind.DECISION_OUTCOME)]


def test_network_limit():
    settings.network_limit = 1
    with pytest.raises(StuckState) as info:
        simulate(tiny(network("all")))
    assert outcome_of(info.value.trace, "Check?")["via"] == "limit"


def test_occurrences_count_per_decision():
    state = start(tiny(pick("true", "false")))
    run(state)
    key = state.model.find("Pick?").key
    assert evaluate_decision(state, key) == "positive"
    [_, second] = entries(state.trace.entries, TraceKind.DECISION_OUTCOME, "Pick?")
    assert second.detail["occurrence"] == 2


# --- generated networks against a brute-force evaluator ---


@st.composite
def topologies(draw, max_nodes: int = 6):
    """Sub-decisions D0..Dn-1 with outcome-labelled triggers that only point forward."""
    n = draw(st.integers(1, max_nodes))
    edges = set()
    for i in range(n - 1):
        for outcome in ("positive", "negative"):
            for j in draw(st.sets(st.integers(i + 1, n - 1), max_size=2)):
                edges.add((i, outcome, j))
    return n, sorted(edges), draw(st.sampled_from(["all", "any"]))


def network_text(n: int, edges: list, combine: str) -> str:
    targets = {j for _, _, j in edges}
    lines = [
        'initial "Check?";',
        'decision "Check?" {',
        "  initial " + ", ".join(f'"D{i}?"' for i in range(n) if i not in targets) + ";",
        f"  combine {combine};",
    ]
    lines += [f'  decision "D{i}?" {{ positive true; negative false; }}' for i in range(n)]
    lines += [f'  trigger "D{i}?" {outcome} -> "D{j}?";' for i, outcome, j in edges]
    lines += [
        "}",
        'process "Yes";',
        'process "No";',
        'trigger "Check?" positive -> "Yes";',
        'trigger "Check?" negative -> "No";',
    ]
    return "\n".join(lines)


def brute_force(n: int, edges: list, outcomes: tuple[str, ...], combine: str) -> str:
    targets = {j for _, _, j in edges}
    follows = {(i, o): [j for s, oo, j in edges if (s, oo) == (i, o)] for i in range(n) for o in ("positive", "negative")}
    reached, pending = set(), [i for i in range(n) if i not in targets]
    while pending:
        i = pending.pop()
        if i not in reached:
            reached.add(i)
            pending += follows[i, outcomes[i]]
    terminal = {outcomes[i] for i in reached if not follows[i, outcomes[i]]}
    if combine == "any":
        return "positive" if "positive" in terminal else "negative"
    return "positive" if terminal == {"positive"} else "negative"


@given(topologies())
@hypothesis_settings(max_examples=60, deadline=None)
def test_networks_match_the_brute_force_evaluator(topology):
    n, edges, combine = topology
    state = start(tiny(network_text(n, edges, combine)))
    model = state.model
    check = model.find("Check?").key
    nodes = [model.find(f"D{i}?") for i in range(n)]
    true, false = expr("true"), expr("false")
    for outcomes in product(("positive", "negative"), repeat=n):
        for node, outcome in zip(nodes, outcomes):
            node.rules["positive"], node.rules["negative"] = (true, false) if outcome == "positive" else (false, true)
        assert evaluate_decision(state, check) == brute_force(n, edges, outcomes, combine), outcomes
