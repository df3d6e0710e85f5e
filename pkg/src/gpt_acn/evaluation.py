"""Metric suite: joint accuracy, corpus-based inform/success, smoothed
corpus BLEU, the combined score, and an entity-consistency F1 proxy."""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .dialogue import BeliefState, norm_value


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    joint_accuracy: float = 0.0
    inform: float = 0.0
    success: float = 0.0
    bleu: float = 0.0
    combined: float = 0.0
    entity_precision: float = 0.0
    entity_recall: float = 0.0
    entity_f1: float = 0.0
    parse_rate: float = 1.0
    counts: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"joint accuracy    {self.joint_accuracy:.4f}",
            f"inform            {self.inform:.4f}",
            f"success           {self.success:.4f}",
            f"bleu              {self.bleu:.4f}",
            f"combined          {self.combined:.2f}",
            f"entity precision  {self.entity_precision:.4f}",
            f"entity recall     {self.entity_recall:.4f}",
            f"entity f1         {self.entity_f1:.4f}",
            f"parse rate        {self.parse_rate:.4f}",
        ]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# state tracking

def joint_accuracy(pred: list[BeliefState], gold: list[BeliefState]) -> float:
    """Fraction of turns whose full normalized belief states match exactly."""
    if len(pred) != len(gold):
        raise EvalError(f"length mismatch: {len(pred)} predictions, {len(gold)} golds")
    if not gold:
        return 0.0
    hits = sum(p.normalized() == g.normalized() for p, g in zip(pred, gold))
    return hits / len(gold)


# ---------------------------------------------------------------------------
# task completion

def _mentions(text: str, phrase: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(norm_value(phrase))}(?!\w)",
                     norm_value(text)) is not None


def inform_success(dialogues, predicted_responses) -> tuple[float, float]:
    """Corpus-side task completion.

    dialogues: list of (GoalSpec, Database) pairs; predicted_responses: one
    list of response strings per dialogue.  Inform: some goal-consistent
    entity name appears in the responses.  Success: inform holds and every
    requested slot's gold value appears too.
    """
    if len(dialogues) != len(predicted_responses):
        raise EvalError("dialogue/prediction count mismatch")
    inform_hits = success_hits = 0
    for (goal, db), responses in zip(dialogues, predicted_responses):
        if goal is None:
            raise EvalError("dialogue is missing its goal")
        joined = "\n".join(responses)
        belief = BeliefState({goal.domain: dict(goal.constraints)})
        records, _ = _all_matches(db, goal.domain, belief)
        informed = any(_mentions(joined, r.name) for r in records)
        expected = next((r for r in db.by_domain[goal.domain]
                         if r.name == goal.expected_name), None)
        answered = expected is not None and all(
            _mentions(joined, expected.attributes[slot]) for slot in goal.requested)
        inform_hits += informed
        success_hits += informed and answered
    n = len(dialogues)
    return inform_hits / n, success_hits / n


def _all_matches(db, domain, belief):
    constraints = {s: v for s, v in belief.slots.get(domain, {}).items()
                   if norm_value(v) != "dontcare"}
    matches = [r for r in db.by_domain.get(domain, [])
               if all(norm_value(r.attributes.get(s, "")) == norm_value(v)
                      for s, v in constraints.items())]
    return matches, len(matches)


# ---------------------------------------------------------------------------
# fluency

def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[str], references: list[str], max_order: int = 4) -> float:
    """Corpus BLEU with brevity penalty; add-one smoothing on orders 2..4."""
    if len(candidates) != len(references):
        raise EvalError("candidate/reference count mismatch")
    if any(not r.split() for r in references):
        raise EvalError("empty reference")
    matches = [0] * max_order
    possible = [0] * max_order
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        c = norm_value(cand).split()
        r = norm_value(ref).split()
        cand_len += len(c)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            overlap = _ngrams(c, n) & _ngrams(r, n)
            matches[n - 1] += sum(overlap.values())
            possible[n - 1] += max(len(c) - n + 1, 0)
    precisions = []
    for n in range(1, max_order + 1):
        if n == 1:
            p = matches[0] / possible[0] if possible[0] else 0.0
        else:
            p = (matches[n - 1] + 1.0) / (possible[n - 1] + 1.0)
        precisions.append(p)
    if min(precisions) == 0.0:
        return 0.0
    geo = math.exp(sum(math.log(p) for p in precisions) / max_order)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return geo * bp


def combined(inform_pct: float, success_pct: float, bleu_pts: float) -> float:
    """(Inform + Success) * 0.5 + BLEU, all on the 0-100 point scale."""
    return (inform_pct + success_pct) * 0.5 + bleu_pts


# ---------------------------------------------------------------------------
# entity consistency

def entity_consistency(per_dialogue) -> tuple[float, float, float]:
    """Desk-scale proxy for requestable-slot precision/recall/F1.

    per_dialogue: list of (responses, allowed_sources, required_entities,
    lexicon) where lexicon is every known entity surface string, allowed
    sources is the text the system could legitimately copy from (db results
    plus dialogue history), and required entities are the gold strings a
    correct dialogue must surface.
    """
    mentioned_total = mentioned_ok = 0
    required_total = required_hit = 0
    for responses, allowed_sources, required, lexicon in per_dialogue:
        joined = "\n".join(responses)
        allowed = "\n".join(allowed_sources)
        for entity in lexicon:
            if _mentions(joined, entity):
                mentioned_total += 1
                if _mentions(allowed, entity):
                    mentioned_ok += 1
        for entity in required:
            required_total += 1
            if _mentions(joined, entity):
                required_hit += 1
    precision = mentioned_ok / mentioned_total if mentioned_total else 0.0
    recall = required_hit / required_total if required_total else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1
