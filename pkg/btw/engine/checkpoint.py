"""Save and restore engine state between runs."""

from __future__ import annotations

import logging
import pickle
from pathlib import Path

from btw.config import settings
from btw.engine.state import EngineState
from btw.errors import CheckpointError

logger = logging.getLogger(__name__)


def save_checkpoint(state: EngineState, path: Path | str) -> Path:
    path = Path(path)
    payload = {"version": settings.checkpoint_version, "state": state}
    try:
        with open(path, "wb") as f:
            pickle.dump(payload, f, protocol=pickle.HIGHEST_PROTOCOL)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"checkpoint written to {path} at clock {state.clock} (step {state.step_count})")
    return path


def load_checkpoint(path: Path | str) -> EngineState:
    """Restore a state saved by `save_checkpoint`. Resuming it reproduces the uninterrupted run."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            payload = pickle.load(f)
    except (OSError, pickle.UnpicklingError, EOFError, AttributeError, ImportError, IndexError, KeyError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if not isinstance(payload, dict) or not isinstance(payload.get("state"), EngineState):
        raise CheckpointError(f"{path} is not an engine checkpoint")
    if payload.get("version") != settings.checkpoint_version:
        raise CheckpointError(
            f"checkpoint {path} has version {payload.get('version')}, expected {settings.checkpoint_version}"
        )
    return payload["state"]
