"""Immutable store contents plus per-scope variable bindings.

Every mutation returns a new snapshot and the Delta that produced it. Applying
a delta forward or inverted is what the journal relies on for undo."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from btw.errors import SchemaViolation
from btw.expr.values import ExprType, Value, ValueKind, kind_of

Record = Mapping[str, Value]
Schema = Mapping[str, ExprType]


@dataclass(frozen=True)
class Delta:
    op: str  # insert | delete | update | var
    store: str  # store name, or scope key for var deltas
    index: int = -1
    before: Record | None = None
    after: Record | None = None
    name: str = ""
    old: Value = None
    new: Value = None


@dataclass(frozen=True)
class StoreSnapshot:
    stores: Mapping[str, tuple[Record, ...]] = field(default_factory=dict)
    variables: Mapping[str, Mapping[str, Value]] = field(default_factory=dict)
    schemas: Mapping[str, Schema] = field(default_factory=dict)

    @classmethod
    def empty(cls, schemas: Mapping[str, Schema], variables: Mapping[str, Mapping[str, Value]] | None = None):
        return cls(
            stores={name: () for name in schemas},
            variables={scope: dict(values) for scope, values in (variables or {}).items()},
            schemas=dict(schemas),
        )

    def records(self, store: str) -> tuple[Record, ...]:
        try:
            return self.stores[store]
        except KeyError:
            raise SchemaViolation(f"unknown store '{store}'") from None

    def key_field(self, store: str) -> str:
        return next(iter(self.schemas[store]))

    def lookup_key(self, store: str, key: Value) -> Record | None:
        name = self.key_field(store)
        for record in self.records(store):
            if record.get(name) == key:
                return record
        return None

    def variable(self, scope: str, name: str) -> Value:
        return self.variables[scope][name]

    def conform(self, store: str, record: Mapping[str, Value]) -> Record:
        """Check a record against the store schema and fill absent fields with None."""
        schema = self.schemas.get(store)
        if not schema:
            raise SchemaViolation(f"store '{store}' has no schema")
        extra = set(record) - set(schema)
        if extra:
            raise SchemaViolation(f"store '{store}' has no field(s) {', '.join(sorted(extra))}")
        result = {}
        for name, expected in schema.items():
            value = record.get(name)
            actual = kind_of(value)
            if value is not None and actual is not expected.kind and not _ref_compatible(actual, expected):
                raise SchemaViolation(
                    f"field '{name}' of store '{store}' expects {expected}, got {actual.value if actual else value!r}"
                )
            result[name] = value
        if result[self.key_field(store)] is None:
            raise SchemaViolation(f"record for store '{store}' lacks key field '{self.key_field(store)}'")
        return result

    # --- mutation ---

    def insert(self, store: str, record: Mapping[str, Value]) -> tuple[StoreSnapshot, Delta]:
        conformed = self.conform(store, record)
        records = self.records(store)
        delta = Delta("insert", store, len(records), None, conformed)
        return self.apply(delta), delta

    def delete(self, store: str, index: int) -> tuple[StoreSnapshot, Delta]:
        delta = Delta("delete", store, index, self.records(store)[index], None)
        return self.apply(delta), delta

    def update(self, store: str, index: int, changes: Mapping[str, Value]) -> tuple[StoreSnapshot, Delta]:
        before = self.records(store)[index]
        after = self.conform(store, {**before, **changes})
        delta = Delta("update", store, index, before, after)
        return self.apply(delta), delta

    def assign(self, scope: str, name: str, value: Value) -> tuple[StoreSnapshot, Delta]:
        delta = Delta("var", scope, name=name, old=self.variables[scope][name], new=value)
        return self.apply(delta), delta

    def apply(self, delta: Delta) -> StoreSnapshot:
        if delta.op == "var":
            scope = {**self.variables[delta.store], delta.name: delta.new}
            return replace(self, variables={**self.variables, delta.store: scope})

        records = list(self.records(delta.store))
        if delta.op == "insert":
            records.insert(delta.index, delta.after)
        elif delta.op == "delete":
            del records[delta.index]
        elif delta.op == "update":
            records[delta.index] = delta.after
        else:
            raise ValueError(f"unknown delta op '{delta.op}'")
        return replace(self, stores={**self.stores, delta.store: tuple(records)})

    def revert(self, delta: Delta) -> StoreSnapshot:
        return self.apply(invert(delta))


def invert(delta: Delta) -> Delta:
    if delta.op == "insert":
        return Delta("delete", delta.store, delta.index, delta.after, None)
    if delta.op == "delete":
        return Delta("insert", delta.store, delta.index, None, delta.before)
    if delta.op == "update":
        return Delta("update", delta.store, delta.index, delta.after, delta.before)
    return Delta("var", delta.store, name=delta.name, old=delta.new, new=delta.old)


def _ref_compatible(actual: ValueKind | None, expected: ExprType) -> bool:
    # ref fields hold the key of the target record, stored as plain text or int
    return expected.kind is ValueKind.REF and actual in (ValueKind.TEXT, ValueKind.INT, ValueKind.REF)


def same_contents(a: StoreSnapshot, b: StoreSnapshot) -> bool:
    def plain(s: StoreSnapshot):
        return (
            {k: [dict(r) for r in v] for k, v in s.stores.items()},
            {k: dict(v) for k, v in s.variables.items()},
        )
    return plain(a) == plain(b)
