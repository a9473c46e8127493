"""Message buffers and their retrieval protocols."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable


@dataclass
class Envelope:
    message: str
    records: list[dict]
    sender: str | None = None
    sent_at: int = 0

    @property
    def record(self) -> dict:
        return self.records[0] if self.records else {}


@dataclass
class MessageBuffer:
    name: str
    protocol: str = "fifo"
    items: list[Envelope] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def put(self, envelope: Envelope) -> None:
        self.items.append(envelope)

    def has(self, messages: set[str] | None = None) -> bool:
        return any(messages is None or e.message in messages for e in self.items)

    def take(
        self,
        rng: random.Random,
        messages: set[str] | None = None,
        predicate: Callable[[Envelope], bool] | None = None,
    ) -> Envelope | None:
        """Remove and return the next envelope under the buffer's protocol.

        For predicate buffers the envelopes satisfying the predicate come first,
        each class in arrival order."""
        candidates = [i for i, e in enumerate(self.items) if messages is None or e.message in messages]
        if not candidates:
            return None
        if self.protocol == "lifo":
            index = candidates[-1]
        elif self.protocol == "random":
            index = candidates[rng.randrange(len(candidates))]
        elif self.protocol == "predicate" and predicate is not None:
            index = next((i for i in candidates if predicate(self.items[i])), candidates[0])
        else:
            index = candidates[0]
        return self.items.pop(index)


def protocol_of(spec: str) -> str:
    """`predicate:<expr>` collapses to `predicate`."""
    return "predicate" if spec.startswith("predicate") else spec
