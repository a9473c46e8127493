import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from btw.config import settings
from btw.dsl.lexer import tokenize
from btw.dsl.parser import Parser
from btw.errors import (
    DecisionWriteAttempt,
    ExpressionError,
    MissingTemporalFact,
    SchemaViolation,
    UnboundVariable,
)
from btw.expr import (
    Bindings,
    MessageOut,
    StoreChanged,
    StoreSnapshot,
    TemporalIndex,
    VarSet,
    check_temporal,
    eval_condition,
    eval_predicate,
    evaluate,
    exec_action,
)
from btw.expr.ast import Counterpart, is_temporal_only
from btw.expr.snapshot import same_contents
from btw.expr.typecheck import TypeEnv, check_predicate, check_statement
from btw.expr.values import (
    DATE,
    DAY,
    DURATION,
    INT,
    TEXT,
    Date,
    Duration,
    ExprType,
    TimeOfDay,
    Timestamp,
    ValueKind,
    coerce,
    duration_of,
    parse_date,
)

from helpers import expr

SCHEMAS = {"Ledger": {"n": INT, "label": TEXT}}


def stmt(text: str):
    tokens, diagnostics = tokenize(text)
    assert not diagnostics
    parser = Parser(tokens)
    node = parser.statement()
    assert parser.at("eof")
    return node


def ledger(*ns: int) -> StoreSnapshot:
    snapshot = StoreSnapshot.empty(SCHEMAS, {"Main": {"count": 0}})
    for n in ns:
        snapshot, _ = snapshot.insert("Ledger", {"n": n, "label": f"#{n}"})
    return snapshot


def value_of(text: str, snapshot: StoreSnapshot | None = None, **kwargs):
    bindings = Bindings(**kwargs)
    return evaluate(expr(text), snapshot or ledger(), bindings.temporal, bindings)


# --- values ---


def test_duration_is_normalised():
    assert Duration(days=1, seconds=-1) == Duration(seconds=DAY - 1)
    assert Duration(seconds=90000) == Duration(days=1, seconds=3600)
    assert Duration(days=-1).total == -DAY


def test_calendar_units_follow_settings():
    assert duration_of(2, "months") == Duration(days=60)
    assert duration_of(1, "year") == Duration(days=365)
    settings.month_days = 28
    assert duration_of(1, "month") == Duration(days=28)
    with pytest.raises(ValueError):
        duration_of(1, "fortnight")


def test_rendering_against_the_epoch():
    assert str(Date(0)) == "1996-01-01"
    assert str(Timestamp(DAY + 3661)) == "1996-01-02T01:01:01"
    assert parse_date("1997-01-01") == Date(366)


def test_coerce_scenario_scalars():
    assert coerce("1996-01-02", DATE) == Date(1)
    assert coerce(5, DURATION) == Duration(seconds=5)
    assert coerce(7, INT) == 7
    assert coerce(None, DATE) is None


# --- evaluator ---


def test_arithmetic_and_calendar():
    assert value_of("1 + 2 * 3") == 7
    assert value_of("-(2 - 5)") == 3
    assert value_of('date "1996-01-31" + 1 days') == Date(31)
    # 1996 is a leap year
    assert value_of('date "1996-03-01" - date "1996-01-01"') == Duration(days=60)
    assert value_of("2 * 3 hours") == Duration(seconds=6 * 3600)


def test_absent_values_never_order():
    assert value_of("x < 3", locals={"x": None}) is False
    assert value_of("x >= 3", locals={"x": None}) is False
    assert value_of("x == 3", locals={"x": None}) is False
    assert value_of("x + 1", locals={"x": None}) is None


def test_variables_read_their_scope():
    assert value_of("count + 1", var_scopes={"count": "Main"}) == 1
    with pytest.raises(UnboundVariable):
        value_of("count")


def test_quantifiers():
    snapshot = ledger(1, 5)
    assert value_of('exists r in "Ledger" (r.n > 3)', snapshot) is True
    assert value_of('forall r in "Ledger" (r.n > 3)', snapshot) is False
    assert value_of('forall r in "Ledger" (r.n > 3)', ledger()) is True
    with pytest.raises(SchemaViolation):
        value_of('exists r in "Nowhere" (true)')


@given(st.lists(st.integers(-5, 5), max_size=8), st.integers(-5, 5))
@hypothesis_settings(max_examples=200, deadline=None)
def test_quantifiers_agree_with_any_and_all(ns, k):
    snapshot = ledger(*ns)
    assert value_of(f'exists r in "Ledger" (r.n > {k})', snapshot) is any(n > k for n in ns)
    assert value_of(f'forall r in "Ledger" (r.n > {k})', snapshot) is all(n > k for n in ns)
    assert value_of(f'not exists r in "Ledger" (r.n == {k})', snapshot) is (k not in ns)


def test_message_fields():
    assert value_of('msg "Letter".id', messages={"Letter": [{"id": 7}]}) == 7
    with pytest.raises(MissingTemporalFact):
        value_of('msg "Letter".id')


def test_predicates_must_be_boolean():
    bindings = Bindings()
    with pytest.raises(ExpressionError):
        eval_predicate(expr("1 + 1"), ledger(), None, bindings)
    assert eval_condition(None, ledger(), None, bindings) is True
    # a missing fact makes a condition false rather than failing
    assert eval_condition(expr('msg "Letter".id == 1'), ledger(), None, bindings) is False


def test_clock_functions():
    assert value_of("today()", clock=2 * DAY + 5) == Date(2)
    assert value_of("now()", clock=42) == Timestamp(42)


# --- temporal index ---


@pytest.fixture
def temporal():
    index = TemporalIndex()
    index.record_start("A", 10)
    index.record_end("A", DAY + 5)
    index.record_send("Letter", 20)
    index.record_receive("Letter", 30)
    index.record_state("Lodged", 40)
    return index


def test_temporal_functions(temporal):
    bindings = Bindings(temporal=temporal, clock=DAY * 3)
    snapshot = StoreSnapshot()
    assert evaluate(expr('end_date("A")'), snapshot, temporal, bindings) == Date(1)
    assert evaluate(expr('start_time("A")'), snapshot, temporal, bindings) == TimeOfDay(10)
    assert evaluate(expr('send_time("Letter")'), snapshot, temporal, bindings) == TimeOfDay(20)
    assert evaluate(expr('rec_time("Letter")'), snapshot, temporal, bindings) == TimeOfDay(30)
    assert evaluate(expr('state_entered("Lodged")'), snapshot, temporal, bindings) == Timestamp(40)
    assert check_temporal(expr('ended("A") and not started("B")'), temporal)


def test_the_starting_entity_reads_as_now(temporal):
    bindings = Bindings(temporal=temporal, clock=DAY + 60, starting="B")
    assert check_temporal(expr('started("B")'), temporal, bindings)
    assert evaluate(expr('start_time("B")'), StoreSnapshot(), temporal, bindings) == TimeOfDay(60)


def test_missing_temporal_facts(temporal):
    with pytest.raises(MissingTemporalFact):
        check_temporal(expr('end_date("B") == today()'), temporal)
    bindings = Bindings(temporal=temporal, entity="C")
    assert eval_condition(expr('end_date("B") == today()'), StoreSnapshot(), temporal, bindings) is False


def test_temporal_only_conditions_are_decided_on_the_index(temporal):
    assert is_temporal_only(expr('ended("A") and rec_date("Letter") <= end_date("A")'))
    assert not is_temporal_only(expr('exists r in "Ledger" (r.n > 0)'))
    assert not is_temporal_only(expr("count > 1"))
    bindings = Bindings(temporal=temporal, clock=DAY * 3)
    assert eval_condition(expr('rec_date("Letter") <= end_date("A")'), StoreSnapshot(), temporal, bindings) is True
    assert eval_condition(expr('rec_date("Reply") <= end_date("A")'), StoreSnapshot(), temporal, bindings) is False


@pytest.mark.parametrize("start, holds", [(30 * DAY, True), (30 * DAY - 1, False), (31 * DAY, True)])
def test_inspection_may_start_two_months_before_gazettal(start, holds):
    index = TemporalIndex()
    index.record_receive("Gazettal Confirmation", 90 * DAY + 5)
    bindings = Bindings(temporal=index, clock=start, starting="Road Inspection")
    constraint = expr('start_date("Road Inspection") >= rec_date("Gazettal Confirmation") - 2 months')
    assert check_temporal(constraint, index, bindings) is holds


@pytest.mark.parametrize("end, holds", [(92 * DAY - 1, True), (92 * DAY, False)])
def test_notices_end_by_the_day_after_gazettal(end, holds):
    index = TemporalIndex()
    index.record_receive("Gazettal Confirmation", 90 * DAY + 5)
    index.record_start("Seek Views", 91 * DAY)
    index.record_end("Seek Views", end)
    constraint = expr('end_date("Seek Views") <= rec_date("Gazettal Confirmation") + 1 days')
    assert check_temporal(constraint, index) is holds


def test_environment_messages_arrive_without_a_send(temporal):
    temporal.record_receive("Reply", 50)
    assert temporal.last_send("Reply") == 50
    assert temporal.last_receive("Reply") == 50


def test_execution_spans(temporal):
    with pytest.raises(ValueError):
        temporal.record_start("C", 100)
        temporal.record_end("C", 99)
    temporal.record_start("A", 200)
    assert temporal.execution_counts() == {"A": 1, "C": 0}
    temporal.discard_open("A")
    assert len(temporal.executions["A"]) == 1


# --- snapshot ---


def test_insert_is_persistent():
    empty = ledger()
    full, delta = empty.insert("Ledger", {"n": 1})
    assert empty.records("Ledger") == ()
    assert full.records("Ledger") == ({"n": 1, "label": None},)
    assert (delta.op, delta.index) == ("insert", 0)


@pytest.mark.parametrize(
    "record",
    [
        {"n": 1, "colour": "red"},
        {"n": "one"},
        {"label": "keyless"},
    ],
)
def test_records_must_conform(record):
    with pytest.raises(SchemaViolation):
        ledger().insert("Ledger", record)


def test_update_and_delete_then_revert():
    snapshot = ledger(1, 2)
    updated, change = snapshot.update("Ledger", 1, {"label": "two"})
    assert updated.records("Ledger")[1]["label"] == "two"
    removed, removal = updated.delete("Ledger", 0)
    assert [r["n"] for r in removed.records("Ledger")] == [2]
    assert same_contents(removed.revert(removal).revert(change), snapshot)


operations = st.lists(
    st.one_of(
        st.tuples(st.just("insert"), st.integers(0, 99)),
        st.tuples(st.just("delete"), st.integers(0, 20)),
        st.tuples(st.just("update"), st.integers(0, 20)),
        st.tuples(st.just("set"), st.integers(-5, 5)),
    ),
    max_size=25,
)


@given(st.lists(st.integers(0, 99), max_size=5), operations)
@hypothesis_settings(max_examples=150, deadline=None)
def test_reverting_deltas_restores_the_snapshot(initial, ops):
    original = ledger(*initial)
    snapshot, deltas = original, []
    for op, arg in ops:
        size = len(snapshot.records("Ledger"))
        if op == "insert":
            snapshot, delta = snapshot.insert("Ledger", {"n": arg})
        elif op == "set":
            snapshot, delta = snapshot.assign("Main", "count", arg)
        elif size == 0:
            continue
        elif op == "delete":
            snapshot, delta = snapshot.delete("Ledger", arg % size)
        else:
            snapshot, delta = snapshot.update("Ledger", arg % size, {"label": str(arg)})
        deltas.append(delta)

    for delta in reversed(deltas):
        snapshot = snapshot.revert(delta)
    assert same_contents(snapshot, original)


# --- actions ---


def test_store_statements():
    bindings = Bindings(var_scopes={"count": "Main"})
    action = [
        stmt('add "Ledger" { n = 3, label = "c" };'),
        stmt('update r in "Ledger" where r.n == 1 set label = "first";'),
        stmt('remove r in "Ledger" where r.n == 2;'),
        stmt("set count = count + 1;"),
    ]
    snapshot, effects = exec_action(action, ledger(1, 2), bindings)
    assert [(r["n"], r["label"]) for r in snapshot.records("Ledger")] == [(1, "first"), (3, "c")]
    assert snapshot.variable("Main", "count") == 1
    assert [type(e) for e in effects] == [StoreChanged, StoreChanged, StoreChanged, VarSet]
    assert effects[-1].old == 0 and effects[-1].new == 1


def test_message_statements():
    bindings = Bindings(messages={"Letter": [{"n": 9, "label": "in"}]})
    action = [
        stmt('send "Note" { n = 4 } to "Reader";'),
        stmt('send "Letter" to service;'),
        stmt('send "Note" to each r in "Ledger" where r.n > 1 "Reader" { n = r.n };'),
        stmt('transfer "Letter" into "Ledger";'),
    ]
    snapshot, effects = exec_action(action, ledger(1, 2, 3), bindings)
    sent = [e for e in effects if isinstance(e, MessageOut)]
    assert [(m.message, m.payload) for m in sent] == [
        ("Note", {"n": 4}),
        ("Letter", {"n": 9, "label": "in"}),
        ("Note", {"n": 2}),
        ("Note", {"n": 3}),
    ]
    assert sent[0].target == Counterpart("entity", "Reader")
    assert sent[1].target == Counterpart("service")
    assert snapshot.records("Ledger")[-1] == {"n": 9, "label": "in"}


def test_decisions_cannot_write():
    bindings = Bindings(entity="Pick?", is_decision=True)
    with pytest.raises(DecisionWriteAttempt):
        exec_action([stmt('add "Ledger" { n = 1 };')], ledger(), bindings)
    _, effects = exec_action([stmt('send "Note" { n = 1 } to service;')], ledger(), bindings)
    assert len(effects) == 1


# --- type checking ---


@pytest.fixture
def env():
    people = ExprType(ValueKind.REF, "People")
    return TypeEnv(
        variables={"count": INT, "due": DATE},
        records={"Ledger": {"n": INT, "owner": people}, "People": {"name": TEXT}},
        stores={"Ledger", "People"},
        entities={"A"},
    )


@pytest.mark.parametrize(
    "text",
    [
        "count > 1 and due <= today()",
        'exists r in "Ledger" (r.owner.name == "Sam")',
        'started("A") or end_date("A") + 2 days > due',
    ],
)
def test_well_typed_predicates(env, text):
    assert check_predicate(expr(text), env) == []


@pytest.mark.parametrize(
    "text, code",
    [
        ("count", "E202"),
        ('count + "x" > 1', "E202"),
        ("due < count", "E202"),
        ("missing > 1", "E201"),
        ('exists r in "Nowhere" (true)', "E201"),
        ('started("Z")', "E201"),
        ('exists r in "Ledger" (r.colour == 1)', "E202"),
    ],
)
def test_ill_typed_predicates(env, text, code):
    [diagnostic] = check_predicate(expr(text), env)
    assert diagnostic.code == code


def test_statements_are_checked(env):
    assert check_statement(stmt('add "Ledger" { n = count, owner = "Sam" };'), env) == []
    assert [d.code for d in check_statement(stmt("set count = due;"), env)] == ["E202"]
    assert [d.code for d in check_statement(stmt('add "Nowhere" { n = 1 };'), env)] == ["E201"]


def test_references_navigate_after_checking(env):
    predicate = expr('exists r in "Ledger" (r.owner.name == "Sam")')
    assert check_predicate(predicate, env) == []
    snapshot = StoreSnapshot.empty(env.records)
    snapshot, _ = snapshot.insert("People", {"name": "Sam"})
    snapshot, _ = snapshot.insert("Ledger", {"n": 1, "owner": "Sam"})
    assert eval_predicate(predicate, snapshot, None, Bindings()) is True
