"""Runtime values of the expression language and their calendar arithmetic.

Logical time is integer seconds since the configured epoch (day 0)."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, time
from enum import Enum
from typing import Union

from btw.config import settings

DAY = 86400


class ValueKind(str, Enum):
    BOOL = "bool"
    INT = "int"
    TEXT = "text"
    DATE = "date"
    TIME = "time"
    TIMESTAMP = "timestamp"
    DURATION = "duration"
    REF = "ref"
    RECORD = "record"


@dataclass(frozen=True)
class ExprType:
    kind: ValueKind
    # Store name for REF, schema name for RECORD
    target: str | None = None

    def __str__(self) -> str:
        return f"{self.kind.value} \"{self.target}\"" if self.target else self.kind.value


BOOL = ExprType(ValueKind.BOOL)
INT = ExprType(ValueKind.INT)
TEXT = ExprType(ValueKind.TEXT)
DATE = ExprType(ValueKind.DATE)
TIME = ExprType(ValueKind.TIME)
TIMESTAMP = ExprType(ValueKind.TIMESTAMP)
DURATION = ExprType(ValueKind.DURATION)

SCALAR_TYPES = {t.kind.value: t for t in (BOOL, INT, TEXT, DATE, TIME, TIMESTAMP, DURATION)}


@dataclass(frozen=True, order=True)
class Date:
    days: int

    def __str__(self) -> str:
        return date.fromordinal(settings.epoch.toordinal() + self.days).isoformat()


@dataclass(frozen=True, order=True)
class TimeOfDay:
    seconds: int

    def __str__(self) -> str:
        h, rest = divmod(self.seconds, 3600)
        m, s = divmod(rest, 60)
        return f"{h:02d}:{m:02d}:{s:02d}"


@dataclass(frozen=True, order=True)
class Timestamp:
    seconds: int

    @property
    def date(self) -> Date:
        return Date(self.seconds // DAY)

    @property
    def time(self) -> TimeOfDay:
        return TimeOfDay(self.seconds % DAY)

    def __str__(self) -> str:
        return f"{self.date}T{self.time}"


@dataclass(frozen=True, order=True)
class Duration:
    """Signed span of days plus seconds, normalised so 0 <= seconds < 86400."""

    days: int = 0
    seconds: int = 0

    def __post_init__(self):
        days, seconds = divmod(self.days * DAY + self.seconds, DAY)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "seconds", seconds)

    @property
    def total(self) -> int:
        return self.days * DAY + self.seconds

    def __str__(self) -> str:
        if self.seconds == 0:
            return f"{self.days} days"
        return f"{self.total} seconds"


@dataclass(frozen=True, order=True)
class RecordRef:
    store: str
    key: object

    def __str__(self) -> str:
        return f"{self.store}[{self.key}]"


Value = Union[bool, int, str, Date, TimeOfDay, Timestamp, Duration, RecordRef, dict, None]

DURATION_UNITS = {
    "second": 1,
    "seconds": 1,
    "minute": 60,
    "minutes": 60,
    "hour": 3600,
    "hours": 3600,
    "day": DAY,
    "days": DAY,
    "week": 7 * DAY,
    "weeks": 7 * DAY,
}


def duration_of(amount: int, unit: str) -> Duration:
    if unit in ("month", "months"):
        return Duration(days=amount * settings.month_days)
    if unit in ("year", "years"):
        return Duration(days=amount * settings.year_days)
    try:
        return Duration(seconds=amount * DURATION_UNITS[unit])
    except KeyError:
        raise ValueError(f"unknown duration unit '{unit}'") from None


def is_duration_unit(word: str) -> bool:
    return word in DURATION_UNITS or word in ("month", "months", "year", "years")


def parse_date(text: str) -> Date:
    return Date(date.fromisoformat(text).toordinal() - settings.epoch.toordinal())


def parse_time(text: str) -> TimeOfDay:
    t = time.fromisoformat(text)
    return TimeOfDay(t.hour * 3600 + t.minute * 60 + t.second)


def parse_timestamp(text: str) -> Timestamp:
    day, _, clock = text.partition("T")
    return Timestamp(parse_date(day).days * DAY + (parse_time(clock).seconds if clock else 0))


def kind_of(value: Value) -> ValueKind | None:
    # bool before int: bool is an int subclass
    if isinstance(value, bool):
        return ValueKind.BOOL
    if isinstance(value, int):
        return ValueKind.INT
    if isinstance(value, str):
        return ValueKind.TEXT
    if isinstance(value, Date):
        return ValueKind.DATE
    if isinstance(value, TimeOfDay):
        return ValueKind.TIME
    if isinstance(value, Timestamp):
        return ValueKind.TIMESTAMP
    if isinstance(value, Duration):
        return ValueKind.DURATION
    if isinstance(value, RecordRef):
        return ValueKind.REF
    if isinstance(value, dict):
        return ValueKind.RECORD
    return None


def zero_value(t: ExprType) -> Value:
    return {
        ValueKind.BOOL: False,
        ValueKind.INT: 0,
        ValueKind.TEXT: "",
        ValueKind.DATE: Date(0),
        ValueKind.TIME: TimeOfDay(0),
        ValueKind.TIMESTAMP: Timestamp(0),
        ValueKind.DURATION: Duration(),
    }.get(t.kind)


def coerce(raw: object, t: ExprType) -> Value:
    """Convert a JSON scalar from a scenario payload into a typed value."""
    if raw is None:
        return None
    if t.kind is ValueKind.DATE and isinstance(raw, str):
        return parse_date(raw)
    if t.kind is ValueKind.TIME and isinstance(raw, str):
        return parse_time(raw)
    if t.kind is ValueKind.TIMESTAMP and isinstance(raw, str):
        return parse_timestamp(raw)
    if t.kind is ValueKind.TIMESTAMP and isinstance(raw, int):
        return Timestamp(raw)
    if t.kind is ValueKind.DURATION and isinstance(raw, int):
        return Duration(seconds=raw)
    return raw


def to_plain(value: Value) -> object:
    """JSON-friendly rendering used by traces and digests."""
    if isinstance(value, (Date, TimeOfDay, Timestamp, Duration, RecordRef)):
        return str(value)
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


def add(left: Value, right: Value) -> Value:
    if isinstance(left, Date) and isinstance(right, Duration):
        return Date((left.days * DAY + right.total) // DAY)
    if isinstance(left, Duration) and isinstance(right, Date):
        return add(right, left)
    if isinstance(left, Timestamp) and isinstance(right, Duration):
        return Timestamp(left.seconds + right.total)
    if isinstance(left, Duration) and isinstance(right, Timestamp):
        return add(right, left)
    if isinstance(left, Duration) and isinstance(right, Duration):
        return Duration(seconds=left.total + right.total)
    return left + right


def subtract(left: Value, right: Value) -> Value:
    if isinstance(left, Date) and isinstance(right, Duration):
        return Date((left.days * DAY - right.total) // DAY)
    if isinstance(left, Date) and isinstance(right, Date):
        return Duration(days=left.days - right.days)
    if isinstance(left, Timestamp) and isinstance(right, Duration):
        return Timestamp(left.seconds - right.total)
    if isinstance(left, Timestamp) and isinstance(right, Timestamp):
        return Duration(seconds=left.seconds - right.seconds)
    if isinstance(left, Duration) and isinstance(right, Duration):
        return Duration(seconds=left.total - right.total)
    return left - right


def multiply(left: Value, right: Value) -> Value:
    if isinstance(left, Duration) and isinstance(right, int):
        return Duration(seconds=left.total * right)
    if isinstance(left, int) and isinstance(right, Duration):
        return Duration(seconds=left * right.total)
    return left * right
