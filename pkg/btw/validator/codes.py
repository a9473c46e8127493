"""Registry of validator codes: the axiom each code enforces, the phrase it is
anchored on and a minimal spec fragment that trips it."""

from __future__ import annotations

from dataclasses import dataclass

from btw.errors import Severity, UnknownCode


@dataclass(frozen=True)
class CodeInfo:
    code: str
    title: str
    axiom: str
    anchor: str
    example: str
    severity: Severity = Severity.ERROR


CODES: dict[str, CodeInfo] = {info.code: info for info in (
    CodeInfo(
        "V001", "entity partition",
        "A name denotes one kind of process entity: process, decision or synchroniser, never two of them.",
        "moments of processing uncertainty",
        'model "M" { process "A" { initial "X"; process "X"; decision "X"; } }',
    ),
    CodeInfo(
        "V002", "unique root",
        "Each process model has exactly one undecomposed process at the top, "
        "and every decomposition names a nonempty set of initial entities.",
        "unique process at the top",
        'model "M" { process "A"; process "B"; }',
    ),
    CodeInfo(
        "V003", "local triggers",
        "A trigger connects two entities of the same decomposition.",
        "triggers should not cross decomposition boundaries",
        'process "A" { initial "X"; process "X" { initial "Y"; process "Y"; } process "Z"; trigger "Y" -> "Z"; }',
    ),
    CodeInfo(
        "V004", "local messaging",
        "Intra-service messaging between entities stays within one decomposition.",
        "messaging should not cross decomposition",
        'process "A" { initial "X"; process "X" { initial "Y"; process "Y" { send "M" to "Z"; } } process "Z"; }',
    ),
    CodeInfo(
        "V005", "decision decompositions",
        "A decision decomposes only into decisions and synchronisers, and performs no action.",
        "only permitted to have decisions",
        'decision "D?" { initial "P"; process "P"; }',
    ),
    CodeInfo(
        "V006", "distinct names per level",
        "Two entities of the same decomposition carry different names.",
        "Name(x) != Name(y)",
        'process "A" { initial "X"; process "X"; process "X"; }',
    ),
    CodeInfo(
        "V007", "variables versus storage",
        "The local variables of a decomposition do not share names with its local storage entities.",
        "To avoid naming conflicts",
        'process "A" { initial "X"; store "n"; var n: int; process "X"; }',
    ),
    CodeInfo(
        "V008", "buffers in scope",
        "Every buffer a process takes from or puts into is local to the decomposition containing it.",
        "part of the same decomposition",
        'process "A" { initial "X"; process "X" { put "M" into buffer "B"; } }',
    ),
    CodeInfo(
        "V009", "buffer allocation",
        "A buffer only carries the message types allocated to it.",
        "MesAlloc",
        'buffer "B" protocol fifo holds "M";  ...  put "N" into buffer "B";',
    ),
    CodeInfo(
        "V010", "remote messaging",
        "Remote messaging names a declared service and never delivers directly; "
        "incoming remote messages arrive through the local service.",
        "received via the local service",
        'process "P" { receive "M" from remote "Parcel Info"; }',
    ),
    CodeInfo(
        "V011", "send-first synchronous messaging",
        "A synchronous exchange starts by sending; the entity is suspended until the reply arrives.",
        "message sending first only",
        'process "P" { sync receive "R" from remote "S" send "M"; }',
    ),
    CodeInfo(
        "V012", "service reachability",
        "Every service state is reachable from birth, death is reachable from every state, "
        "birth has no incoming and death no outgoing transitions.",
        "birth and death states",
        'service "S" { state "X"; on birth -> death when abort nonfailure; }',
        Severity.WARNING,
    ),
    CodeInfo(
        "V013", "ECA references",
        "States, messages, entities and services named by event-condition-action rules exist "
        "and have the kind the event requires.",
        "Attached to each transition",
        'service "S" { on birth -> "Nowhere" when process_end "P"; }',
    ),
    CodeInfo(
        "V014", "recovery table",
        "Decisions carry no rollback; compensations name another existing entity; contingency "
        "thresholds strictly increase with at most one unbounded threshold.",
        "decisions do not require rollbacks",
        'recovery { "P": redo [3 -> "F", 2 -> "G"]; }',
    ),
    CodeInfo(
        "V015", "allocation axiom",
        "An actor playing a role that undertakes a process located in a unit is located in that "
        "unit (strict) or below it (transitive).",
        "Assign o Undertake o Structure is included in Structure",
        'actor "Ann"; role "Clerk"; assign "Ann" to "Clerk"; undertake "Clerk" "P"; structure "Registry" contains "P";',
    ),
    CodeInfo(
        "V016", "organisation forest",
        "The sub-unit relation over organisational units is acyclic.",
        "SubOf",
        'orgunit "A" sub_of "B"; orgunit "B" sub_of "A";',
    ),
    CodeInfo(
        "V017", "store nature",
        "An object store holds material or informational object types, but not both.",
        "but not both",
        'objtype "Form" material; objtype "Record" informational; store "S" holds "Form", "Record";',
    ),
    CodeInfo(
        "V018", "exclusive processes",
        "Only processes may be marked exclusive.",
        "active processing entities should be quiesced",
        'decision "D?" { exclusive; positive true; negative false; }',
    ),
)}


def info(code: str) -> CodeInfo:
    try:
        return CODES[code]
    except KeyError:
        raise UnknownCode(f"unknown diagnostic code '{code}'") from None


def explain(code: str) -> str:
    entry = info(code)
    return (
        f"{entry.code} ({entry.severity.value}): {entry.title}\n"
        f"  {entry.axiom}\n"
        f"  anchor: \"{entry.anchor}\"\n"
        f"  fails on: {entry.example}"
    )
