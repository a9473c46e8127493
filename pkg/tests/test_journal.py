import pytest

from btw.engine.journal import Journal, JournalEntry
from btw.engine.trace import TraceKind, TraceLog, digest_of, read_trace, write_trace
from btw.expr import StoreSnapshot
from btw.expr.snapshot import same_contents
from btw.expr.values import INT, Date

SCHEMAS = {"Ledger": {"n": INT}}


def executed(journal: Journal, snapshot: StoreSnapshot, exec_id: int, started: int, *ns: int) -> StoreSnapshot:
    deltas = []
    for n in ns:
        snapshot, delta = snapshot.insert("Ledger", {"n": n})
        deltas.append(delta)
    journal.record(JournalEntry(exec_id, f"Main/E{exec_id}", f"E{exec_id}", started, started + 1, deltas))
    return snapshot


def test_rollback_undoes_uncommitted_work_only():
    journal = Journal()
    empty = StoreSnapshot.empty(SCHEMAS)
    snapshot = executed(journal, empty, 1, 0, 1, 2)
    after_first = snapshot
    snapshot = executed(journal, snapshot, 2, 5, 3)
    snapshot = executed(journal, snapshot, 3, 6, 4)
    assert [e.exec_id for e in journal.commit({1})] == [1]
    assert journal.commit({1}) == []

    snapshot = journal.rollback_uncommitted(snapshot)
    assert same_contents(snapshot, after_first)
    assert [e.exec_id for e in journal.entries] == [1]


def test_committed_entries_cannot_be_undone():
    journal = Journal()
    snapshot = executed(journal, StoreSnapshot.empty(SCHEMAS), 1, 0, 1)
    [entry] = journal.commit({1})
    with pytest.raises(ValueError, match="committed"):
        journal.undo(entry, snapshot)


def test_since_is_latest_first():
    journal = Journal()
    snapshot = StoreSnapshot.empty(SCHEMAS)
    for exec_id, started in [(1, 0), (2, 10), (3, 20)]:
        snapshot = executed(journal, snapshot, exec_id, started)
    assert [e.exec_id for e in journal.since(10)] == [3, 2]
    assert [e.exec_id for e in journal.uncommitted()] == [1, 2, 3]


def test_trace_log_numbers_and_digests():
    log = TraceLog()
    first = log.emit(0, TraceKind.ENTITY_STARTED, ["A"], outcome=None)
    second = log.emit(5, TraceKind.DECISION_OUTCOME, ("Pick?",), outcome="positive", on=Date(1))
    assert [first.seq, second.seq] == [1, 2]
    assert first.detail == {}
    assert second.detail == {"outcome": "positive", "on": "1996-01-02"}
    assert second.digest == digest_of(TraceKind.DECISION_OUTCOME, ["Pick?"], second.detail)
    assert first.digest != second.digest
    assert log.since(1) == [second]


def test_trace_files_read_back(tmp_path):
    log = TraceLog()
    log.emit(0, TraceKind.MESSAGE_RECEIVED, ["service", "Application Documents"], records=[{"id": "ä"}])
    log.emit(3, TraceKind.DEATH, ["Road Closures"])
    path = tmp_path / "trace.jsonl"
    write_trace(log.entries, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[1] == (
        '{"seq":2,"clock":3,"kind":"Death","subject":["Road Closures"],"detail":{},'
        f'"digest":"{log.entries[1].digest}"}}'
    )
    assert read_trace(path) == log.entries


def test_detail_keys_may_shadow_entry_fields():
    log = TraceLog()
    entry = log.emit(7, TraceKind.ABORT_RAISED, ["A"], kind="failure", subject="x", clock=1)
    assert entry.kind is TraceKind.ABORT_RAISED
    assert (entry.clock, entry.subject) == (7, ["A"])
    assert entry.detail == {"kind": "failure", "subject": "x", "clock": 1}
