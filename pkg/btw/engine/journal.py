"""Execution journal: one entry per completed execution, in completion order,
holding the deltas needed to undo it while it is uncommitted."""

from __future__ import annotations

from dataclasses import dataclass, field

from btw.expr.snapshot import Delta, StoreSnapshot


@dataclass
class JournalEntry:
    exec_id: int
    entity: str  # entity key
    name: str
    started: int
    completed: int
    deltas: list[Delta] = field(default_factory=list)
    committed: bool = False
    group: str | None = None
    is_decision: bool = False


@dataclass
class Journal:
    entries: list[JournalEntry] = field(default_factory=list)

    def record(self, entry: JournalEntry) -> JournalEntry:
        self.entries.append(entry)
        return entry

    def commit(self, exec_ids: set[int]) -> list[JournalEntry]:
        committed = []
        for entry in self.entries:
            if entry.exec_id in exec_ids and not entry.committed:
                entry.committed = True
                committed.append(entry)
        return committed

    def uncommitted(self) -> list[JournalEntry]:
        return [e for e in self.entries if not e.committed]

    def since(self, clock: int) -> list[JournalEntry]:
        """Entries whose execution started at or after `clock`, latest completion first."""
        return [e for e in reversed(self.entries) if e.started >= clock]

    def undo(self, entry: JournalEntry, snapshot: StoreSnapshot) -> StoreSnapshot:
        """Inverse-replay an uncommitted entry and drop it from the journal."""
        if entry.committed:
            raise ValueError(f"entry {entry.exec_id} of '{entry.name}' is committed")
        for delta in reversed(entry.deltas):
            snapshot = snapshot.revert(delta)
        self.entries.remove(entry)
        return snapshot

    def rollback_uncommitted(self, snapshot: StoreSnapshot) -> StoreSnapshot:
        """Undo every uncommitted entry, latest first."""
        for entry in reversed(self.uncommitted()):
            snapshot = self.undo(entry, snapshot)
        return snapshot
