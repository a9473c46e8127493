"""Scenario files: one JSON record per line driving a simulation run.

Injections (message, f_abort, nf_abort, advance) are consumed in order and must
have nondecreasing times. Overrides pin decision outcomes; replies script what
remote services answer to synchronous calls."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator

from btw.errors import ScenarioError

logger = logging.getLogger(__name__)

INJECTION_KINDS = ("message", "f_abort", "nf_abort", "advance")


class ScenarioRecord(BaseModel):
    t: int = Field(ge=0)
    kind: Literal["message", "f_abort", "nf_abort", "advance", "override", "reply"]
    target: str | None = None
    payload: Any = None


class Override(BaseModel):
    occurrence: int | Literal["*"] = "*"
    outcome: Literal["positive", "negative"]


class Reply(BaseModel):
    message: str
    records: list[dict] = Field(default_factory=list)
    delay: int = Field(default=0, ge=0)


class Scenario(BaseModel):
    injections: list[ScenarioRecord] = Field(default_factory=list)
    # decision name -> overrides in file order
    overrides: dict[str, list[Override]] = Field(default_factory=dict)
    # remote service name -> replies in the order they are handed out
    replies: dict[str, list[Reply]] = Field(default_factory=dict)

    @field_validator("injections")
    @classmethod
    def times_nondecreasing(cls, injections: list[ScenarioRecord]) -> list[ScenarioRecord]:
        for before, after in zip(injections, injections[1:]):
            if after.t < before.t:
                raise ValueError(f"injection at t={after.t} follows one at t={before.t}")
        return injections

    def override_for(self, decision: str, occurrence: int) -> str | None:
        wildcard = None
        for o in self.overrides.get(decision, []):
            if o.occurrence == occurrence:
                return o.outcome
            if o.occurrence == "*" and wildcard is None:
                wildcard = o.outcome
        return wildcard


def _record_error(source: str, line: int, error: Exception) -> ScenarioError:
    return ScenarioError(f"{source}:{line}: {error}")


def parse_scenario(lines: list[str], source: str = "<scenario>") -> Scenario:
    injections, overrides, replies = [], {}, {}
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = ScenarioRecord.model_validate(json.loads(line))
            if record.kind == "override":
                if not record.target:
                    raise ValueError("override needs a target decision")
                overrides.setdefault(record.target, []).append(Override.model_validate(record.payload))
            elif record.kind == "reply":
                if not record.target:
                    raise ValueError("reply needs a target service")
                replies.setdefault(record.target, []).append(Reply.model_validate(record.payload))
            else:
                injections.append(record)
        except (json.JSONDecodeError, ValidationError, ValueError) as e:
            raise _record_error(source, number, e) from e

    try:
        scenario = Scenario(injections=injections, overrides=overrides, replies=replies)
    except ValidationError as e:
        raise ScenarioError(f"{source}: {e.errors()[0]['msg']}") from e
    logger.info(f"loaded scenario {source}: {len(injections)} injection(s)")
    return scenario


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from e
    return parse_scenario(text.splitlines(), str(path))
