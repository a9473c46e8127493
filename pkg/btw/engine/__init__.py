from btw.engine.checkpoint import load_checkpoint, save_checkpoint
from btw.engine.decisions import evaluate_decision
from btw.engine.eca import dispatch_eca
from btw.engine.engine import init_instance, quiesce_for_exclusive, run, send_message, step, summarize
from btw.engine.recovery import raise_abort
from btw.engine.scenario import Scenario, load_scenario, parse_scenario
from btw.engine.state import EngineState
from btw.engine.trace import TraceEntry, TraceKind, read_trace, write_trace

__all__ = [
    "EngineState",
    "Scenario",
    "TraceEntry",
    "TraceKind",
    "dispatch_eca",
    "evaluate_decision",
    "init_instance",
    "load_checkpoint",
    "load_scenario",
    "parse_scenario",
    "quiesce_for_exclusive",
    "raise_abort",
    "read_trace",
    "run",
    "save_checkpoint",
    "send_message",
    "step",
    "summarize",
    "write_trace",
]
