import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from btw.config import settings
from btw.engine import (
    TraceKind,
    dispatch_eca,
    init_instance,
    load_checkpoint,
    parse_scenario,
    run,
    save_checkpoint,
    step,
    summarize,
)
from btw.engine.trace import TraceEntry
from btw.errors import (
    BudgetExhausted,
    CheckpointError,
    EngineError,
    MissingTemporalFact,
    ModelInvalid,
    ScenarioError,
    StuckState,
)
from btw.models import Event

from helpers import ENTRY, GO, INVALID, LEDGER, build, entries, names, simulate, start, tiny

SEQUENCE = (
    'initial "A";\n'
    'process "A" { duration 10 seconds; }\n'
    'process "B" { duration 5 seconds; }\n'
    'trigger "A" -> "B";'
)


def completed_at(trace: list[TraceEntry], name: str) -> list[int]:
    return [e.clock for e in entries(trace, TraceKind.ENTITY_COMPLETED, name)]


def started_at(trace: list[TraceEntry], name: str) -> list[int]:
    return [e.clock for e in entries(trace, TraceKind.ENTITY_STARTED, name)]


def test_sequence_runs_to_death():
    state, trace = simulate(tiny(SEQUENCE))
    assert state.done
    assert completed_at(trace, "A") == [10]
    assert started_at(trace, "B") == [10]
    assert completed_at(trace, "B") == [15]
    assert trace[-1].kind is TraceKind.DEATH
    assert trace[-1].subject == ["Desk"]

    summary = summarize(state)
    assert summary["final_state"] == "Working"
    assert summary["terminated"] is True
    assert summary["clock"] == 15
    assert summary["executions"] == {"A": 1, "B": 1, "Main": 1}
    assert summary["trace"]["Death"] == 1


def test_service_transitions_are_traced():
    _, trace = simulate(tiny(SEQUENCE))
    transitions = entries(trace, TraceKind.STATE_TRANSITION)
    assert [(t.subject, t.detail["rule"]) for t in transitions] == [
        (["birth", "Working"], "R1"),
        (["Working", "death"], "R2"),
    ]
    [received] = entries(trace, TraceKind.MESSAGE_RECEIVED)
    assert received.subject == ["environment", "Go"]


def test_trace_numbering_is_dense():
    _, trace = simulate(tiny(SEQUENCE))
    assert [e.seq for e in trace] == list(range(1, len(trace) + 1))
    assert [e.clock for e in trace] == sorted(e.clock for e in trace)


def test_synchroniser_joins_both_branches():
    body = (
        'initial "A", "B";\n'
        'process "A" { duration 3 seconds; }\n'
        'process "B" { duration 7 seconds; }\n'
        'sync "Join";\n'
        'process "C" { duration 1 second; }\n'
        'trigger "A" -> "Join";\n'
        'trigger "B" -> "Join";\n'
        'trigger "Join" -> "C";'
    )
    state, trace = simulate(tiny(body))
    assert started_at(trace, "Join") == [7]
    assert completed_at(trace, "Join") == [7]
    assert started_at(trace, "C") == [7]
    assert state.clock == 8


def test_exclusive_process_waits_for_quiescence():
    body = (
        'initial "A", "X";\n'
        'process "A" { duration 5 seconds; }\n'
        'process "X" { exclusive; duration 1 second; }'
    )
    state, trace = simulate(tiny(body))
    [quiesce] = entries(trace, TraceKind.QUIESCE)
    assert quiesce.subject == ["X"]
    assert quiesce.detail == {"running": ["A"]}
    assert started_at(trace, "X") == [5]
    assert state.clock == 6


def test_overstaying_a_service_state():
    body = 'initial "A";\nprocess "A" { duration 10 seconds; }'
    state, trace = simulate(tiny(body, state='state "Working" max 5 seconds;'))
    [violation] = entries(trace, TraceKind.TEMPORAL_VIOLATION)
    assert violation.clock == 6
    assert violation.subject == ["Working"]
    assert violation.detail == {"max": "5 seconds", "entered": 0}
    assert state.done and state.clock == 10


def test_temporal_precondition_violation_aborts_at_the_deadline():
    body = 'initial "A";\nprocess "A" { timeout 10 seconds; pre started("B"); }\nprocess "B";'
    with pytest.raises(StuckState) as info:
        simulate(tiny(body))
    [violation] = entries(info.value.trace, TraceKind.TEMPORAL_VIOLATION)
    assert violation.clock == 10
    assert violation.subject == ["A"]
    assert violation.detail == {"constraint": 'started("B")', "phase": "pre"}
    [abort] = entries(info.value.trace, TraceKind.ABORT_RAISED)
    assert abort.detail == {"kind": "nonfailure", "reason": "temporal pre-condition violated"}
    assert not info.value.state.done


LATE = 'message "Late" external;'
NOT_BEFORE_LATE = 'initial "A";\nprocess "A" { timeout 30 seconds; pre start_date("A") >= rec_date("Late") - 2 months; }'


def late_at(t: int) -> str:
    return f'{{"t": {t}, "kind": "message", "target": "Late"}}'


def test_temporal_precondition_waits_for_a_missing_fact():
    state, trace = simulate(tiny(NOT_BEFORE_LATE, LATE), [GO, late_at(10)])
    assert started_at(trace, "A") == [10]
    assert not entries(trace, TraceKind.TEMPORAL_VIOLATION)
    assert state.done


@pytest.mark.parametrize("arrival, violated", [(30, False), (31, True)])
def test_temporal_precondition_deadline_is_inclusive(arrival, violated):
    text = tiny(NOT_BEFORE_LATE, LATE)
    if not violated:
        _, trace = simulate(text, [GO, late_at(arrival)])
        assert started_at(trace, "A") == [30]
        return
    with pytest.raises(StuckState) as info:
        simulate(text, [GO, late_at(arrival)])
    [violation] = entries(info.value.trace, TraceKind.TEMPORAL_VIOLATION)
    assert violation.clock == 30
    assert not started_at(info.value.trace, "A")


@pytest.mark.parametrize("seconds, violated", [(2 * 86400 - 1, False), (2 * 86400, True)])
def test_temporal_postcondition_boundary_is_inclusive(seconds, violated):
    body = (
        'initial "A";\n'
        f'process "A" {{ duration {seconds} seconds; post end_date("A") <= rec_date("Go") + 1 days; }}'
    )
    if not violated:
        state, trace = simulate(tiny(body))
        assert not entries(trace, TraceKind.TEMPORAL_VIOLATION)
        assert state.clock == seconds
        return
    with pytest.raises(StuckState) as info:
        simulate(tiny(body))
    [violation] = entries(info.value.trace, TraceKind.TEMPORAL_VIOLATION)
    assert (violation.clock, violation.detail["phase"]) == (seconds, "post")
    [abort] = entries(info.value.trace, TraceKind.ABORT_RAISED)
    assert abort.detail == {"kind": "nonfailure", "reason": "post-condition violated"}


def test_missing_fact_in_a_postcondition_is_an_error():
    body = 'initial "A";\nprocess "A" { post end_date("A") <= end_date("Never"); }\nprocess "Never";'
    with pytest.raises(MissingTemporalFact, match="Never"):
        simulate(tiny(body))


def test_false_postcondition_undoes_the_work():
    body = (
        'initial "A";\n'
        'process "A" {\n'
        '  action { add "Ledger" { n = 1 }; }\n'
        '  post not exists e in "Ledger" (e.n == 1);\n'
        '}'
    )
    with pytest.raises(StuckState) as info:
        simulate(tiny(body, LEDGER, ENTRY))
    trace = info.value.trace
    assert names(trace, TraceKind.UNDO_APPLIED) == ["A"]
    assert not entries(trace, TraceKind.TEMPORAL_VIOLATION)
    assert info.value.state.snapshot.records("Ledger") == ()


def test_precondition_waits_for_data():
    body = (
        'initial "A", "B";\n'
        'process "A" { duration 4 seconds; action { add "Ledger" { n = 1 }; } }\n'
        'process "B" { pre exists e in "Ledger" (e.n == 1); }'
    )
    _, trace = simulate(tiny(body, LEDGER, ENTRY))
    assert started_at(trace, "B") == [4]


def test_precondition_times_out():
    body = 'initial "A";\nprocess "A" { timeout 30 seconds; pre exists e in "Ledger" (e.n == 1); }'
    with pytest.raises(StuckState) as info:
        simulate(tiny(body, LEDGER, ENTRY))
    [abort] = entries(info.value.trace, TraceKind.ABORT_RAISED)
    assert abort.clock == 30
    assert abort.detail["reason"] == "pre-condition still false at timeout"


def test_messages_between_siblings_pass_through_a_link_buffer():
    body = (
        'initial "Writer", "Reader";\n'
        'process "Writer" { duration 5 seconds; send "Note" to "Reader"; }\n'
        'process "Reader" { duration 1 second; receive "Note" from "Writer"; }'
    )
    state, trace = simulate(tiny(body, 'message "Note";'))
    link = "Main/Writer->Main/Reader"
    [put] = entries(trace, TraceKind.BUFFER_PUT)
    assert (put.clock, put.subject) == (5, ["Writer", link, "Note"])
    [take] = entries(trace, TraceKind.BUFFER_TAKE)
    assert (take.clock, take.subject) == (5, ["Reader", link, "Note"])
    assert completed_at(trace, "Reader") == [6]
    assert len(state.buffers[link]) == 0


def test_sends_to_the_service_are_traced():
    body = 'initial "A";\nprocess "A" { send "Note" to service; }'
    _, trace = simulate(tiny(body, 'message "Note";'))
    [sent] = entries(trace, TraceKind.MESSAGE_SENT)
    assert sent.subject == ["A", "service", "Note"]
    assert sent.detail == {"records": 1}


def test_variables_are_initialised_and_assigned():
    body = (
        'initial "A";\n'
        'var count: int = 2 + 3;\n'
        'process "A" { action { set count = count + 1; } }'
    )
    state, _ = simulate(tiny(body))
    assert state.snapshot.variable("Main", "count") == 6


def test_without_a_service_models_start_directly():
    text = (
        'scope "Tiny" {\n}\n'
        'model "Work" {\n'
        '  process "Main" {\n'
        '    initial "A";\n'
        '    process "A" { duration 2 seconds; }\n'
        '  }\n'
        '}\n'
    )
    registry, model = build(text)
    state = init_instance(model, registry)
    with pytest.raises(StuckState) as info:
        run(state)
    assert info.value.state.clock == 2
    assert summarize(info.value.state)["executions"] == {"A": 1, "Main": 1}


def test_first_declared_rule_shadows_later_matches():
    state = start(tiny(SEQUENCE, rules='  on birth -> death when msg_from "Go";'))
    assert dispatch_eca(state, Event("msg_to", "Go")) == []
    assert dispatch_eca(state, Event("msg_from", "Go")) == ["R1"]
    [transition] = entries(state.trace.entries, TraceKind.STATE_TRANSITION)
    assert transition.subject == ["birth", "Working"]
    assert transition.detail == {"rule": "R1", "shadowed": ["R3"]}


PING = 'message "Ping" external;\n  message "Pong";\n  service "Registry" external;'
PING_RULES = (
    '  on "Working" when msg_from "Ping" then send "Pong" to "Registry";\n'
    '  on "Working" when msg_from "Ping" then none;\n'
    '  on "Working" -> death when msg_to "Pong";'
)


def test_action_only_rules_record_shadowing_and_their_sends():
    body = 'initial "A";\nprocess "A" { duration 10 seconds; }'
    ping = '{"t": 3, "kind": "message", "target": "Ping"}'
    state, trace = simulate(tiny(body, PING, rules=PING_RULES), [GO, ping])
    stay, leave = entries(trace, TraceKind.STATE_TRANSITION)[1:]
    assert stay.clock == 3
    assert stay.subject == ["Working", "Working"]
    assert stay.detail == {"rule": "R3", "shadowed": ["R4"], "stay": True}
    [sent] = entries(trace, TraceKind.MESSAGE_SENT)
    assert sent.subject == ["Desk", "Registry", "Pong"]
    assert (leave.subject, leave.detail["rule"]) == (["Working", "death"], "R5")
    assert state.done and state.clock == 3
    assert len(state.service.history) == 2


def test_step_budget():
    state = start(tiny(SEQUENCE))
    with pytest.raises(BudgetExhausted) as info:
        run(state, 3)
    assert info.value.state.step_count == 3
    with pytest.raises(ValueError):
        run(state, 0)


def test_budget_defaults_to_settings():
    settings.max_steps = 2
    with pytest.raises(BudgetExhausted):
        simulate(tiny(SEQUENCE))


def test_single_steps():
    state = start(tiny(SEQUENCE))
    _, first = step(state)
    assert [e.kind for e in first] == [TraceKind.MESSAGE_RECEIVED]
    _, second = step(state)
    assert [e.kind for e in second] == [TraceKind.STATE_TRANSITION]
    run(state)
    with pytest.raises(EngineError):
        step(state)


def test_same_seed_same_trace(scenario_state):
    _, first = run(scenario_state("happy_path", seed=7))
    _, second = run(scenario_state("happy_path", seed=7))
    assert [e.digest for e in first] == [e.digest for e in second]
    assert [e.to_line() for e in first] == [e.to_line() for e in second]


def test_checkpoint_resume_matches_uninterrupted_run(scenario_state, tmp_path):
    reference, reference_trace = run(scenario_state("happy_path"))

    with pytest.raises(BudgetExhausted) as info:
        run(scenario_state("happy_path"), 20)
    path = save_checkpoint(info.value.state, tmp_path / "run.ckpt")
    resumed, resumed_trace = run(load_checkpoint(path))

    assert summarize(resumed) == summarize(reference)
    assert [e.digest for e in resumed_trace] == [e.digest for e in reference_trace]


def test_checkpoint_version_must_match(scenario_state, tmp_path):
    path = save_checkpoint(scenario_state("happy_path"), tmp_path / "run.ckpt")
    settings.checkpoint_version += 1
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_must_be_a_checkpoint(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_invalid_models_do_not_start():
    registry, model = build((INVALID / "V006.btw").read_text())
    with pytest.raises(ModelInvalid) as info:
        init_instance(model, registry)
    assert [d.code for d in info.value.diagnostics] == ["V006"]


def test_warnings_do_not_stop_a_run():
    registry, model = build((INVALID / "V012.btw").read_text())
    state, _ = run(init_instance(model, registry, parse_scenario([GO])))
    assert state.done


@pytest.mark.parametrize(
    "line, message",
    [
        ('{"t": 0, "kind": "override", "target": "Nope?", "payload": {"outcome": "positive"}}', "unknown decision"),
        ('{"t": 0, "kind": "message", "target": "Ghost"}', "unknown message type"),
        ('{"t": 0, "kind": "f_abort", "target": "Ghost"}', "unknown entity"),
        ('{"t": 0, "kind": "reply", "target": "Ghost", "payload": {"message": "Go"}}', "unknown service"),
    ],
)
def test_scenarios_must_name_known_things(line, message):
    with pytest.raises(ScenarioError, match=message):
        start(tiny(SEQUENCE), [GO, line])


def test_scenario_records_are_checked():
    with pytest.raises(ScenarioError, match="<scenario>:2"):
        parse_scenario([GO, "{not json"])
    with pytest.raises(ScenarioError, match="t=2"):
        parse_scenario(['{"t": 5, "kind": "advance"}', '{"t": 2, "kind": "advance"}'])
    with pytest.raises(ScenarioError):
        parse_scenario(['{"t": -1, "kind": "advance"}'])
    with pytest.raises(ScenarioError):
        parse_scenario(['{"t": 0, "kind": "override", "payload": {"outcome": "positive"}}'])


def test_overrides_prefer_exact_occurrences():
    scenario = parse_scenario([
        '{"t": 0, "kind": "override", "target": "D?", "payload": {"outcome": "negative"}}',
        '{"t": 0, "kind": "override", "target": "D?", "payload": {"occurrence": 2, "outcome": "positive"}}',
    ])
    assert scenario.override_for("D?", 1) == "negative"
    assert scenario.override_for("D?", 2) == "positive"
    assert scenario.override_for("E?", 1) is None


@st.composite
def exclusive_workloads(draw):
    """Processes P0..Pn-1 plus an exclusive X, wired by forward triggers in a drawn order."""
    order = draw(st.permutations([f"P{i}" for i in range(draw(st.integers(1, 5)))] + ["X"]))
    edges = [(a, b) for i, a in enumerate(order) for b in order[i + 1:] if draw(st.booleans())]
    targets = {b for _, b in edges}
    lines = ["initial " + ", ".join(f'"{n}"' for n in order if n not in targets) + ";"]
    for name in order:
        seconds = draw(st.integers(1, 20))
        flag = " exclusive;" if name == "X" else ""
        lines.append(f'process "{name}" {{{flag} duration {seconds} seconds; }}')
    lines += [f'trigger "{a}" -> "{b}";' for a, b in edges]
    return "\n".join(lines)


@given(exclusive_workloads())
@hypothesis_settings(max_examples=100, deadline=None)
def test_nothing_runs_beside_an_exclusive_process(body):
    state, trace = simulate(tiny(body))
    assert state.done
    spans = {}
    for e in trace:
        if e.kind is TraceKind.ENTITY_STARTED:
            spans[e.detail["exec"]] = [e.subject[0], e.seq, e.clock, None, None]
        elif e.kind is TraceKind.ENTITY_COMPLETED:
            spans[e.detail["exec"]][3:] = [e.seq, e.clock]
    windows = [s for s in spans.values() if s[0] == "X"]
    assert windows
    for _, first, began, last, ended in windows:
        between = [e for e in trace if first < e.seq < last and e.kind is TraceKind.ENTITY_STARTED]
        assert not between
        for name, _, start_clock, _, end_clock in spans.values():
            if name not in ("X", "Main"):
                assert end_clock <= began or start_clock >= ended, (name, start_clock, end_clock)
