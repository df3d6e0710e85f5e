"""Corpus-level model evaluation: run the staged pipeline over every turn
and aggregate the metric suite into an EvalReport."""
from __future__ import annotations

from . import codec, dialogue, evaluation, inference, kb, model as M


def entity_lexicon(*dbs: kb.Database) -> list[str]:
    """Every entity name and phone value known to the given databases."""
    lex = []
    for db in dbs:
        for records in db.by_domain.values():
            for r in records:
                lex.append(r.name)
                if "phone" in r.attributes:
                    lex.append(r.attributes["phone"])
    return sorted(set(lex))


def evaluate_model(model: M.Model, vocab: codec.Vocab, db: kb.Database, corpus,
                   extra_lexicon: list[str] = (),
                   max_history_turns: int = dialogue.DEFAULT_MAX_HISTORY_TURNS
                   ) -> evaluation.EvalReport:
    """Generate with gold dialogue history per turn and score everything."""
    pred_beliefs: list[dialogue.BeliefState] = []
    gold_beliefs: list[dialogue.BeliefState] = []
    candidates: list[str] = []
    references: list[str] = []
    goal_pairs = []
    per_dialogue_responses = []
    per_dialogue_entity = []
    lexicon = sorted(set(entity_lexicon(db)) | set(extra_lexicon))
    n_turns = 0
    n_parsed = 0

    for d in corpus.dialogues:
        responses = []
        allowed_sources = []
        for i, turn in enumerate(d.turns):
            n_turns += 1
            history = d.turns[:i]
            for h in history:
                allowed_sources.append(h.user_utterance)
                allowed_sources.append(h.system_response)
            allowed_sources.append(turn.user_utterance)
            try:
                result = inference.respond(model, vocab, db, history,
                                           turn.user_utterance,
                                           max_history_turns=max_history_turns)
            except inference.BeliefParseError:
                pred_beliefs.append(dialogue.BeliefState())
                candidates.append("")
                references.append(turn.system_response)
                responses.append("")
                continue
            n_parsed += 1
            pred_beliefs.append(result.belief)
            candidates.append(result.response)
            references.append(turn.system_response)
            responses.append(result.response)
            allowed_sources.append(result.db_text)
        for turn in d.turns:
            gold_beliefs.append(turn.belief)

        goal_pairs.append((d.goal, db))
        per_dialogue_responses.append(responses)
        expected = next((r for r in db.by_domain[d.goal.domain]
                         if r.name == d.goal.expected_name), None)
        required = [d.goal.expected_name]
        if expected is not None:
            required += [expected.attributes[s] for s in d.goal.requested
                         if s in expected.attributes]
        per_dialogue_entity.append((responses, allowed_sources, required, lexicon))

    ja = evaluation.joint_accuracy(pred_beliefs, gold_beliefs)
    inform, success = evaluation.inform_success(goal_pairs, per_dialogue_responses)
    bleu_score = evaluation.bleu(candidates, references)
    precision, recall, f1 = evaluation.entity_consistency(per_dialogue_entity)
    report = evaluation.EvalReport(
        joint_accuracy=ja,
        inform=inform,
        success=success,
        bleu=bleu_score,
        combined=evaluation.combined(inform * 100, success * 100, bleu_score * 100),
        entity_precision=precision,
        entity_recall=recall,
        entity_f1=f1,
        parse_rate=n_parsed / n_turns if n_turns else 1.0,
        counts={"dialogues": len(corpus.dialogues), "turns": n_turns,
                "parsed_turns": n_parsed},
    )
    return report
