from btw.expr.actions import MessageOut, StoreChanged, VarSet, exec_action
from btw.expr.evaluator import Bindings, check_temporal, eval_condition, eval_predicate, evaluate
from btw.expr.snapshot import Delta, StoreSnapshot
from btw.expr.temporal import TemporalIndex

__all__ = [
    "Bindings",
    "Delta",
    "MessageOut",
    "StoreChanged",
    "StoreSnapshot",
    "TemporalIndex",
    "VarSet",
    "check_temporal",
    "eval_condition",
    "eval_predicate",
    "evaluate",
    "exec_action",
]
