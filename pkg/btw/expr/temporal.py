"""Execution statistics kept for temporal functions: entity start/end, message
send/receive and service-state entry times, all in logical seconds."""

from __future__ import annotations

from dataclasses import dataclass, field

from btw.errors import MissingTemporalFact


@dataclass
class ExecutionSpan:
    start: int
    end: int | None = None


@dataclass
class MessageTimes:
    send: int | None = None
    receive: int | None = None


@dataclass
class TemporalIndex:
    executions: dict[str, list[ExecutionSpan]] = field(default_factory=dict)
    messages: dict[str, list[MessageTimes]] = field(default_factory=dict)
    states: dict[str, list[int]] = field(default_factory=dict)

    def record_start(self, entity: str, clock: int) -> None:
        self.executions.setdefault(entity, []).append(ExecutionSpan(clock))

    def record_end(self, entity: str, clock: int) -> None:
        for span in reversed(self.executions.get(entity, [])):
            if span.end is None:
                if clock < span.start:
                    raise ValueError(f"'{entity}' cannot end before it started")
                span.end = clock
                return
        raise MissingTemporalFact(f"'{entity}' has no open execution to end")

    def discard_open(self, entity: str) -> None:
        """Forget an execution that was cancelled before it ended."""
        spans = self.executions.get(entity, [])
        for i in range(len(spans) - 1, -1, -1):
            if spans[i].end is None:
                del spans[i]
                return

    def record_send(self, message: str, clock: int) -> None:
        self.messages.setdefault(message, []).append(MessageTimes(send=clock))

    def record_receive(self, message: str, clock: int) -> None:
        times = self.messages.setdefault(message, [])
        for entry in times:
            if entry.receive is None and entry.send is not None and entry.send <= clock:
                entry.receive = clock
                return
        # Arrived from the environment: the send time is unknown, taken as arrival
        times.append(MessageTimes(send=clock, receive=clock))

    def record_state(self, state: str, clock: int) -> None:
        self.states.setdefault(state, []).append(clock)

    # --- queries ---

    def last_completed(self, entity: str) -> ExecutionSpan:
        for span in reversed(self.executions.get(entity, [])):
            if span.end is not None:
                return span
        raise MissingTemporalFact(f"'{entity}' has no completed execution")

    def has_started(self, entity: str) -> bool:
        return bool(self.executions.get(entity))

    def has_ended(self, entity: str) -> bool:
        return any(span.end is not None for span in self.executions.get(entity, []))

    def last_send(self, message: str) -> int:
        for entry in reversed(self.messages.get(message, [])):
            if entry.send is not None:
                return entry.send
        raise MissingTemporalFact(f"message '{message}' was never sent")

    def last_receive(self, message: str) -> int:
        for entry in reversed(self.messages.get(message, [])):
            if entry.receive is not None:
                return entry.receive
        raise MissingTemporalFact(f"message '{message}' was never received")

    def state_entry(self, state: str) -> int:
        entries = self.states.get(state)
        if not entries:
            raise MissingTemporalFact(f"service state '{state}' was never entered")
        return entries[-1]

    def execution_counts(self) -> dict[str, int]:
        return {
            entity: sum(1 for span in spans if span.end is not None)
            for entity, spans in sorted(self.executions.items())
        }
