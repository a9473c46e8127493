"""End-to-end runs of the road closures service over its bundled scenarios."""

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from btw.engine import TraceKind, init_instance, parse_scenario, run, summarize, write_trace
from btw.errors import StuckState
from btw.expr.values import DAY, Date

from helpers import SCENARIOS, entries, names


def application(state, app_id: str) -> dict:
    [record] = [r for r in state.snapshot.records("Application Database") if r["app_id"] == app_id]
    return record


@pytest.mark.parametrize(
    "scenario, final_state, clock",
    [
        ("happy_path", "Title issued", 1411200),
        ("rejection", "Application rejected", 262800),
        ("rollback", "Application rejected", 608400),
    ],
)
def test_scenarios_reach_death(scenario_state, scenario, final_state, clock):
    state, trace = run(scenario_state(scenario))
    summary = summarize(state)
    assert summary["terminated"]
    assert summary["final_state"] == final_state
    assert summary["clock"] == clock
    assert trace[-1].kind is TraceKind.DEATH


def test_happy_path(scenario_state):
    state, trace = run(scenario_state("happy_path"))
    record = application(state, "RC-1996-014")
    assert record["status"] == "titled"
    assert record["gazetted_on"] == Date(1)
    assert len(state.snapshot.records("Stakeholder Register")) == 2

    [commit] = entries(trace, TraceKind.COMMIT)
    assert commit.subject == ["Preparation Grain"]
    assert commit.detail["members"] == ["Preparation", "Seek Views"]

    notices = [e for e in entries(trace, TraceKind.MESSAGE_SENT) if e.subject[2] == "Notice of Road Closure"]
    assert [e.subject[1] for e in notices] == ["Stakeholder Mail", "Stakeholder Mail"]
    assert names(trace, TraceKind.MESSAGE_SENT).count("Issue Title") == 1
    assert not entries(trace, TraceKind.ABORT_RAISED)


def test_synchronous_calls_suspend_until_the_reply(scenario_state):
    _, trace = run(scenario_state("happy_path"))
    [request] = [e for e in entries(trace, TraceKind.MESSAGE_SENT) if e.subject[2] == "Gazettal Request"]
    [reply] = [e for e in entries(trace, TraceKind.MESSAGE_RECEIVED) if e.subject[-1] == "Gazettal Confirmation"]
    assert reply.subject == ["Gazettal service", "Preparation", "Gazettal Confirmation"]
    assert reply.clock - request.clock == 86400


def test_rejection(scenario_state):
    state, trace = run(scenario_state("rejection"))
    assert application(state, "RC-1996-015")["complete"] is False
    review = [e.detail["outcome"] for e in entries(trace, TraceKind.DECISION_OUTCOME, "Initial review passed?")]
    assert review == ["negative"]
    reject = [e.detail["outcome"] for e in entries(trace, TraceKind.DECISION_OUTCOME, "Reject Application?")]
    assert reject == ["positive"]
    assert "Notify Rejection" in names(trace, TraceKind.ENTITY_COMPLETED)


def test_rollback_compensates_in_reverse_completion_order(scenario_state):
    state, trace = run(scenario_state("rollback"))
    compensations = [e.subject for e in entries(trace, TraceKind.COMPENSATION_STARTED)]
    assert compensations == [
        ["Closure Rejection Notification", "Seek Views"],
        ["Revert Preparation", "Preparation"],
    ]
    assert not entries(trace, TraceKind.UNDO_APPLIED)
    assert application(state, "RC-1996-016")["status"] == "lodged"

    [abort] = entries(trace, TraceKind.ABORT_RAISED)
    assert (abort.clock, abort.subject) == (604800, ["Process Views"])
    withdrawals = [e for e in entries(trace, TraceKind.MESSAGE_SENT) if e.subject[0] == "Closure Rejection Notification"]
    assert len(withdrawals) == 2


def test_seed_does_not_change_a_tie_free_run(scenario_state):
    _, first = run(scenario_state("happy_path", seed=1))
    _, second = run(scenario_state("happy_path", seed=2))
    assert [e.digest for e in first] == [e.digest for e in second]


@given(st.sampled_from(["happy_path", "rejection", "rollback"]), st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_runs_write_identical_trace_files(scenario_state, tmp_path_factory, scenario, seed):
    folder = tmp_path_factory.mktemp("traces")
    for name in ("first.jsonl", "second.jsonl"):
        _, trace = run(scenario_state(scenario, seed=seed))
        write_trace(trace, folder / name)
    assert (folder / "first.jsonl").read_bytes() == (folder / "second.jsonl").read_bytes()


# --- the notice deadline: Seek Views must end no later than the day after gazettal ---


def with_parcel_delay(road_closures, delay: int):
    registry, model = road_closures
    lines = (SCENARIOS / "happy_path.jsonl").read_text(encoding="utf-8").splitlines()
    lines = [line.replace('"delay": 3600', f'"delay": {delay}') for line in lines]
    try:
        return run(init_instance(model, registry, parse_scenario(lines)))
    except StuckState as e:
        return e.state, e.trace


def test_notice_deadline_is_inclusive(road_closures):
    state, trace = with_parcel_delay(road_closures, 3600)
    [done] = entries(trace, TraceKind.ENTITY_COMPLETED, "Seek Views")
    received = state.temporal.last_receive("Gazettal Confirmation")
    last_second = (received // DAY + 2) * DAY - 1
    on_time = 3600 + last_second - done.clock
    assert on_time > 3600

    state, trace = with_parcel_delay(road_closures, on_time)
    [done] = entries(trace, TraceKind.ENTITY_COMPLETED, "Seek Views")
    assert done.clock == last_second
    assert not entries(trace, TraceKind.TEMPORAL_VIOLATION, "Seek Views")
    assert summarize(state)["final_state"] == "Title issued"

    state, trace = with_parcel_delay(road_closures, on_time + 1)
    [violation] = entries(trace, TraceKind.TEMPORAL_VIOLATION, "Seek Views")
    assert violation.clock == last_second + 1
    assert violation.detail["phase"] == "post"
    assert "post-condition violated" in [e.detail.get("reason") for e in entries(trace, TraceKind.ABORT_RAISED)]
    assert summarize(state)["final_state"] != "Title issued"
