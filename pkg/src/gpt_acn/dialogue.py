"""Structured dialogue semantics and their natural-text linear form.

The linearized sequence uses no reserved symbols at all: turns are plain
"User:" / "System:" lines and the intermediate pipeline stages are the
"Belief:", "Database:" and "Action:" lines.  Parsing is the inverse of
serialization on well-formed text; a tolerant mode skips malformed clauses
and reports them instead of failing.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import codec

ACT_TYPES = {"inform", "request", "book", "offer", "recommend", "nooffer", "greet", "bye"}

DEFAULT_MAX_HISTORY_TURNS = 15


class FormatError(ValueError):
    pass


def norm_value(s: str) -> str:
    """Lowercase and collapse whitespace; the comparison form for slot values."""
    return " ".join(s.lower().split())


@dataclass
class BeliefState:
    """domain -> slot -> value, iterated lexicographically."""

    slots: dict[str, dict[str, str]] = field(default_factory=dict)

    def set(self, domain: str, slot: str, value: str):
        if not domain or not slot:
            raise FormatError("empty domain or slot key")
        self.slots.setdefault(domain, {})[slot] = value

    def items(self):
        for domain in sorted(self.slots):
            for slot in sorted(self.slots[domain]):
                yield domain, slot, self.slots[domain][slot]

    def domains(self):
        return sorted(self.slots)

    def copy(self) -> "BeliefState":
        return BeliefState({d: dict(sv) for d, sv in self.slots.items()})

    def normalized(self):
        return tuple((d, s, norm_value(v)) for d, s, v in self.items())

    def __bool__(self):
        return any(self.slots.values())

    def __eq__(self, other):
        return isinstance(other, BeliefState) and dict(self.slots) == dict(other.slots)


@dataclass(frozen=True)
class DialogueAct:
    domain: str
    act_type: str
    slot: str | None = None
    value: str | None = None

    def __post_init__(self):
        if self.act_type not in ACT_TYPES:
            raise FormatError(f"unknown act type {self.act_type!r}")


@dataclass
class SystemAction:
    acts: list[DialogueAct] = field(default_factory=list)

    def __bool__(self):
        return bool(self.acts)

    def __eq__(self, other):
        return isinstance(other, SystemAction) and self.acts == other.acts


@dataclass
class DialogueTurn:
    user_utterance: str
    belief: BeliefState
    db_records: list[dict[str, str]]
    db_total: int
    action: SystemAction
    system_response: str


@dataclass
class LinearizedTurn:
    token_ids: list[int]
    loss_mask: list[int]
    spans: dict[str, tuple[int, int]]  # history / belief / db / action / response


# ---------------------------------------------------------------------------
# serialization

def serialize_belief(belief: BeliefState) -> str:
    if not belief:
        return "none"
    return ", ".join(f"{d} {s} = {v}" for d, s, v in belief.items())


def serialize_action(action: SystemAction) -> str:
    if not action:
        return "none"
    parts = []
    for act in action.acts:
        words = [act.domain, act.act_type]
        if act.slot is not None:
            words.append(act.slot)
            if act.value is not None:
                words.append(act.value)
        parts.append(" ".join(words))
    return "; ".join(parts)


def render_db(records: list[dict[str, str]], total: int) -> str:
    """Natural-text rendering of query results, no placeholder tokens."""
    if not records:
        return f"{total} matches."
    clauses = []
    for rec in records:
        keys = ["name"] + sorted(k for k in rec if k != "name")
        clauses.append(", ".join(f"{k} = {rec[k]}" for k in keys))
    return f"{total} matches. " + "; ".join(clauses)


def turn_segments(history: list[DialogueTurn], current: DialogueTurn,
                  max_history_turns: int = DEFAULT_MAX_HISTORY_TURNS) -> dict[str, str]:
    """The five text segments of one training sequence, in order."""
    hist_lines = []
    for turn in history[-max_history_turns:]:
        hist_lines.append(f"User: {turn.user_utterance}\n")
        hist_lines.append(f"System: {turn.system_response}\n")
    hist_lines.append(f"User: {current.user_utterance}\n")
    return {
        "history": "".join(hist_lines),
        "belief": f"Belief: {serialize_belief(current.belief)}\n",
        "db": f"Database: {render_db(current.db_records, current.db_total)}\n",
        "action": f"Action: {serialize_action(current.action)}\n",
        "response": f"System: {current.system_response}\n",
    }


def serialize_turn(history: list[DialogueTurn], current: DialogueTurn,
                   max_history_turns: int = DEFAULT_MAX_HISTORY_TURNS) -> str:
    return "".join(turn_segments(history, current, max_history_turns).values())


SEGMENT_ORDER = ("history", "belief", "db", "action", "response")


def linearize_turn(vocab: codec.Vocab, history: list[DialogueTurn], current: DialogueTurn,
                   max_history_turns: int = DEFAULT_MAX_HISTORY_TURNS) -> LinearizedTurn:
    """Encode each segment separately so span boundaries are exact token indices."""
    segments = turn_segments(history, current, max_history_turns)
    ids: list[int] = []
    spans = {}
    for name in SEGMENT_ORDER:
        seg_ids = codec.encode(vocab, segments[name])
        spans[name] = (len(ids), len(ids) + len(seg_ids))
        ids.extend(seg_ids)
    lin = LinearizedTurn(token_ids=ids, loss_mask=[], spans=spans)
    lin.loss_mask = build_loss_mask(lin)
    return lin


def build_loss_mask(linearized: LinearizedTurn) -> list[int]:
    """1 everywhere except the db segment (its marker included), which is 0."""
    n = len(linearized.token_ids)
    spans = sorted(linearized.spans.values())
    for (_, end), (start, _) in zip(spans, spans[1:]):
        if start < end:
            raise FormatError("overlapping segment spans")
    mask = [1] * n
    db_start, db_end = linearized.spans["db"]
    for i in range(db_start, db_end):
        mask[i] = 0
    return mask


# ---------------------------------------------------------------------------
# parsing

def _marker_content(text: str, marker: str) -> str:
    m = re.search(rf"^{marker}:[ ]?(.*)$", text, flags=re.MULTILINE)
    if m is None:
        raise FormatError(f"missing marker {marker!r}")
    return m.group(1).strip()


def parse_belief(text: str, problems: list[str] | None = None) -> BeliefState:
    content = _marker_content(text, "Belief")
    belief = BeliefState()
    if content == "none" or content == "":
        return belief
    for clause in content.split(","):
        clause = clause.strip()
        if not clause:
            continue
        left, eq, value = clause.partition("=")
        words = left.split()
        if not eq or len(words) != 2 or not value.strip():
            if problems is not None:
                problems.append(clause)
                continue
            raise FormatError(f"malformed belief clause {clause!r}")
        belief.set(words[0], words[1], value.strip())
    return belief


def parse_action(text: str, problems: list[str] | None = None) -> SystemAction:
    content = _marker_content(text, "Action")
    action = SystemAction()
    if content == "none" or content == "":
        return action
    for clause in content.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        words = clause.split()
        if len(words) < 2 or words[1] not in ACT_TYPES:
            if problems is not None:
                problems.append(clause)
                continue
            raise FormatError(f"malformed action clause {clause!r}")
        slot = words[2] if len(words) > 2 else None
        value = " ".join(words[3:]) if len(words) > 3 else None
        action.acts.append(DialogueAct(words[0], words[1], slot, value))
    return action


def extract_response(text: str) -> str:
    matches = re.findall(r"^System:[ ]?(.*)$", text, flags=re.MULTILINE)
    if not matches:
        raise FormatError("missing marker 'System'")
    return matches[-1].strip()
