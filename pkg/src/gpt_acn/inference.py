"""Staged greedy decoding: generate the belief line, halt, query the
database, splice the rendered results into the context, then resume for
the action and response lines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import codec, dialogue, kb, model as M, tensor as T

STAGES = ("belief", "db", "action", "response", "done")

DEFAULT_STAGE_LIMITS = {"belief": 64, "action": 48, "response": 96}


class BeliefParseError(ValueError):
    """Stage-1 output that does not parse; carries the raw generated text."""

    def __init__(self, raw_text: str, cause: Exception):
        super().__init__(f"belief stage output failed to parse: {cause}")
        self.raw_text = raw_text


@dataclass
class GenerationState:
    context: list[int]
    stage: str = "belief"
    stage_limits: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_STAGE_LIMITS))

    def advance(self, stage: str):
        if STAGES.index(stage) <= STAGES.index(self.stage):
            raise ValueError(f"stage transition {self.stage} -> {stage} not monotone")
        self.stage = stage


@dataclass
class StepDiagnostics:
    gate: list[float] = field(default_factory=list)
    copy_share: list[float] = field(default_factory=list)


@dataclass
class RespondResult:
    belief: dialogue.BeliefState
    db_text: str
    action: dialogue.SystemAction
    response: str
    belief_raw: str
    action_raw: str
    diagnostics: StepDiagnostics
    db_records: list = field(default_factory=list)
    db_total: int = 0
    response_token_ids: list = field(default_factory=list)


def generate_until(model: M.Model, vocab: codec.Vocab, context: list[int],
                   stop_text: str, max_new_tokens: int,
                   diagnostics: StepDiagnostics | None = None) -> tuple[str, list[int]]:
    """Greedy continuation of context until the decoded generation reaches
    stop_text or the token budget; ties break toward the lowest token id."""
    if len(context) + max_new_tokens > model.config.max_positions:
        raise M.LengthError(
            f"context {len(context)} + budget {max_new_tokens} exceeds "
            f"max_positions {model.config.max_positions}")
    if stop_text and codec.decode(vocab, context).endswith(stop_text):
        return "", []
    ids = list(context)
    generated: list[int] = []
    with T.no_grad():
        for _ in range(max_new_tokens):
            out = M.forward_full(model, ids)
            row = out.mixed_probs.data[-1]
            tok = int(np.argmax(row))  # argmax takes the lowest index on ties
            generated.append(tok)
            ids.append(tok)
            if diagnostics is not None:
                if out.gate is not None:
                    g = float(out.gate.data[-1, 0])
                    share = g * float(out.copy_probs.data[-1, tok])
                else:
                    g, share = 0.0, 0.0
                diagnostics.gate.append(g)
                diagnostics.copy_share.append(share)
            text = codec.decode(vocab, generated)
            # containment also covers a stop marker hidden inside one
            # multi-byte token
            if stop_text and stop_text in text:
                break
    return codec.decode(vocab, generated), generated


def _first_line(text: str) -> str:
    """Up to and including the first newline (the whole text if none)."""
    pos = text.find("\n")
    return text if pos < 0 else text[:pos + 1]


def _history_context(vocab: codec.Vocab, history: list[dialogue.DialogueTurn],
                     user_utterance: str, max_history_turns: int) -> list[int]:
    lines = []
    for turn in history[-max_history_turns:]:
        lines.append(f"User: {turn.user_utterance}\n")
        lines.append(f"System: {turn.system_response}\n")
    lines.append(f"User: {user_utterance}\n")
    return codec.encode(vocab, "".join(lines))


def _query_domain(belief: dialogue.BeliefState) -> str | None:
    """The domain the db stage should query: most-constrained, ties lexicographic."""
    domains = belief.domains()
    if not domains:
        return None
    return max(domains, key=lambda d: (len(belief.slots[d]), ), default=None) \
        if len(domains) > 1 else domains[0]


def respond(model: M.Model, vocab: codec.Vocab, db: kb.Database,
            history: list[dialogue.DialogueTurn], user_utterance: str,
            max_history_turns: int = dialogue.DEFAULT_MAX_HISTORY_TURNS,
            stage_limits: dict[str, int] | None = None) -> RespondResult:
    """Full pipeline for one turn: belief, database splice, action, response."""
    state = GenerationState(
        context=_history_context(vocab, history, user_utterance, max_history_turns),
        stage_limits=stage_limits or dict(DEFAULT_STAGE_LIMITS))
    diagnostics = StepDiagnostics()

    # Every stage stops on the marker that opens the *next* line; the
    # context always ends with "\n", so a bare-newline stop would satisfy
    # the "already at context end" rule and generate nothing.  The kept
    # text is cut back to the stage's own line and re-encoded so the
    # spliced tokens match the training-time segment boundaries.
    raw, _ = generate_until(
        model, vocab, state.context, "\nDatabase:", state.stage_limits["belief"])
    belief_raw = _first_line(raw)
    try:
        belief = dialogue.parse_belief(belief_raw, problems=[])
    except dialogue.FormatError as e:
        raise BeliefParseError(belief_raw, e) from None
    state.context.extend(codec.encode(vocab, belief_raw))
    state.advance("db")

    domain = _query_domain(belief)
    if domain is not None and domain in db.by_domain:
        records, total = kb.query(db, domain, belief)
        db_text = kb.format_results(records, total)
    else:
        records, total = [], 0
        db_text = "0 matches."
    state.context.extend(codec.encode(vocab, f"Database: {db_text}\n"))
    state.advance("action")

    raw, _ = generate_until(
        model, vocab, state.context, "\nSystem:", state.stage_limits["action"])
    action_raw = _first_line(raw)
    try:
        action = dialogue.parse_action(action_raw, problems=[])
    except dialogue.FormatError:
        action = dialogue.SystemAction()
    state.context.extend(codec.encode(vocab, action_raw))
    state.advance("response")

    raw, raw_ids = generate_until(
        model, vocab, state.context, "\nUser:", state.stage_limits["response"],
        diagnostics=diagnostics)
    response_raw = _first_line(raw)
    # keep only the tokens (and their diagnostics) of the response line
    n_keep = len(raw_ids)
    for k in range(1, len(raw_ids) + 1):
        if "\n" in codec.decode(vocab, raw_ids[:k]):
            n_keep = k
            break
    diagnostics.gate = diagnostics.gate[:n_keep]
    diagnostics.copy_share = diagnostics.copy_share[:n_keep]
    try:
        response = dialogue.extract_response(response_raw)
    except dialogue.FormatError:
        response = response_raw.strip()
    state.advance("done")

    return RespondResult(belief=belief, db_text=db_text, action=action,
                         response=response, belief_raw=belief_raw,
                         action_raw=action_raw, diagnostics=diagnostics,
                         db_records=[r.attributes for r in records],
                         db_total=total, response_token_ids=raw_ids[:n_keep])
