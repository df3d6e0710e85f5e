"""Deterministic synthetic task-oriented dialogue generator and corpus I/O.

Two domains (restaurant, hotel), templated multi-turn dialogues, and
entity-name word pools that are disjoint between the train and eval
corpora, so evaluation probes generalization to unseen entities.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import kb
from .dialogue import BeliefState, DialogueAct, DialogueTurn, SystemAction

FORMAT_VERSION = 1

INFORMABLE = {
    "restaurant": ["food", "area", "pricerange"],
    "hotel": ["area", "pricerange", "stars"],
}
REQUESTABLE = {
    "restaurant": ["phone", "area", "pricerange"],
    "hotel": ["phone", "area", "stars"],
}
VALUES = {
    "food": ["italian", "chinese", "indian", "thai", "french"],
    "area": ["north", "south", "east", "west", "centre"],
    "pricerange": ["cheap", "moderate", "expensive"],
    "stars": ["2", "3", "4", "5"],
}

# name word pools; disjoint per corpus so eval entities are unseen in training
NAME_WORDS = {
    "train": (["golden", "silver", "royal", "jolly", "happy", "lucky", "grand", "cosy"],
              ["palace", "garden", "lotus", "corner", "table", "lantern", "anchor", "willow"]),
    "eval": (["crimson", "amber", "misty", "velvet", "ivory", "dusky", "coral", "breezy"],
             ["harbor", "meadow", "orchid", "pavilion", "terrace", "grove", "summit", "haven"]),
    "pretrain": (["quiet", "bright", "little", "ancient", "modern", "sunny", "windy", "hidden"],
                 ["house", "bridge", "mill", "tower", "arch", "barn", "court", "lodge"]),
}

ENTITIES_PER_DOMAIN = 20


class CorpusError(ValueError):
    pass


@dataclass
class GoalSpec:
    domain: str
    constraints: dict[str, str]
    requested: list[str]
    expected_name: str


@dataclass
class Dialogue:
    goal: GoalSpec
    turns: list[DialogueTurn]


@dataclass
class CorpusFile:
    format_version: int = FORMAT_VERSION
    dialogues: list[Dialogue] = field(default_factory=list)


# ---------------------------------------------------------------------------
# generation

def _build_database(rng, pool: str) -> kb.Database:
    firsts, seconds = NAME_WORDS[pool]
    combos = [f"{a} {b}" for a in firsts for b in seconds]
    rng.shuffle(combos)
    db = kb.Database()
    used_phones = set()

    def fresh_phone():
        while True:
            phone = "".join(str(d) for d in rng.integers(0, 10, size=6))
            if phone not in used_phones:
                used_phones.add(phone)
                return phone

    idx = 0
    for domain in ("restaurant", "hotel"):
        for _ in range(ENTITIES_PER_DOMAIN):
            name = combos[idx]
            idx += 1
            attrs = {"name": name, "phone": fresh_phone()}
            for slot in INFORMABLE[domain]:
                attrs[slot] = str(rng.choice(VALUES[slot]))
            db.add(kb.EntityRecord(domain, name, attrs))
    return db


def _constraint_phrase(domain, slot, value):
    if slot == "food":
        return f"serving {value} food"
    if slot == "area":
        return f"in the {value}"
    if slot == "pricerange":
        return f"in the {value} price range"
    if slot == "stars":
        return f"with {value} stars"
    raise CorpusError(f"no phrase for slot {slot}")


def _constrain_utterance(rng, domain, constraints):
    opener = str(rng.choice([f"i am looking for a {domain}",
                             f"i need a {domain}",
                             f"can you find me a {domain}"]))
    phrases = [_constraint_phrase(domain, s, v) for s, v in constraints]
    return " ".join([opener] + phrases)


def _offer_turn(rng, domain, name):
    response = str(rng.choice([f"how about {name} ?",
                               f"i recommend {name} .",
                               f"{name} is a great choice ."]))
    action = SystemAction([DialogueAct(domain, "offer", "name", name)])
    return action, response


def _generate_dialogue(rng, db: kb.Database, did: int) -> Dialogue:
    domain = str(rng.choice(["restaurant", "hotel"]))
    records = db.by_domain[domain]
    target = records[int(rng.integers(0, len(records)))]

    n_constraints = int(rng.integers(1, len(INFORMABLE[domain]) + 1))
    slots = list(rng.choice(INFORMABLE[domain], size=n_constraints, replace=False))
    constraints = [(s, target.attributes[s]) for s in sorted(slots)]
    requested = ["phone"]
    extra = [s for s in REQUESTABLE[domain] if s != "phone" and s not in dict(constraints)]
    if extra and rng.random() < 0.5:
        requested.append(str(rng.choice(extra)))

    turns: list[DialogueTurn] = []
    belief = BeliefState()

    # constraint turns: all at once, or split over two user turns
    split = len(constraints) >= 2 and rng.random() < 0.4
    groups = [constraints[:1], constraints[1:]] if split else [constraints]
    offered = None
    for group in groups:
        for s, v in group:
            belief.set(domain, s, v)
        results, total = kb.query(db, domain, belief)
        offered = results[0]
        action, response = _offer_turn(rng, domain, offered.name)
        turns.append(DialogueTurn(
            user_utterance=_constrain_utterance(rng, domain, group),
            belief=belief.copy(),
            db_records=[r.attributes for r in results],
            db_total=total,
            action=action,
            system_response=response,
        ))

    for slot in requested:
        results, total = kb.query(db, domain, belief)
        value = offered.attributes[slot]
        utterance = str(rng.choice([f"what is the {slot} ?",
                                    f"can you tell me the {slot} ?",
                                    f"could you give me the {slot} ?"]))
        turns.append(DialogueTurn(
            user_utterance=utterance,
            belief=belief.copy(),
            db_records=[r.attributes for r in results],
            db_total=total,
            action=SystemAction([DialogueAct(domain, "inform", slot, value)]),
            system_response=f"the {slot} of {offered.name} is {value} .",
        ))

    if rng.random() < 0.7:
        results, total = kb.query(db, domain, belief)
        turns.append(DialogueTurn(
            user_utterance=str(rng.choice(["thank you , goodbye .",
                                           "thanks , that is all ."])),
            belief=belief.copy(),
            db_records=[r.attributes for r in results],
            db_total=total,
            action=SystemAction([DialogueAct(domain, "bye")]),
            system_response="you are welcome , goodbye .",
        ))

    goal = GoalSpec(domain=domain, constraints=dict(constraints),
                    requested=requested, expected_name=offered.name)
    return Dialogue(goal=goal, turns=turns)


def generate_synthetic(seed: int, n_dialogues: int, entity_pool: str = "train"):
    """Deterministic (CorpusFile, Database) pair for the given pool."""
    if n_dialogues < 1:
        raise CorpusError("n_dialogues must be >= 1")
    if entity_pool not in NAME_WORDS:
        raise CorpusError(f"unknown entity pool {entity_pool!r}")
    import numpy as np
    pool_id = {"train": 0, "eval": 1, "pretrain": 2}[entity_pool]
    rng = np.random.default_rng([seed, pool_id])
    db = _build_database(rng, entity_pool)
    corpus = CorpusFile(dialogues=[_generate_dialogue(rng, db, i)
                                   for i in range(n_dialogues)])
    return corpus, db


def generate_pretrain_text(seed: int, n_sentences: int = 400) -> list[str]:
    """Plain sentences in the corpus register, entity names from the
    pretrain pool, for desk-scale backbone pretraining."""
    import numpy as np
    rng = np.random.default_rng([seed, 0x9E37])
    firsts, seconds = NAME_WORDS["pretrain"]
    sentences = []
    for _ in range(n_sentences):
        kind = rng.random()
        name = f"{rng.choice(firsts)} {rng.choice(seconds)}"
        food = str(rng.choice(VALUES["food"]))
        area = str(rng.choice(VALUES["area"]))
        price = str(rng.choice(VALUES["pricerange"]))
        phone = "".join(str(d) for d in rng.integers(0, 10, size=6))
        if kind < 0.25:
            sentences.append(f"{name} is a {price} {food} restaurant in the {area} .")
        elif kind < 0.5:
            sentences.append(f"the phone of {name} is {phone} .")
        elif kind < 0.75:
            sentences.append(f"i am looking for a hotel in the {area} "
                             f"in the {price} price range .")
        else:
            sentences.append(f"how about {name} ? it serves {food} food .")
    return sentences


def _random_word(rng, lo=3, hi=8) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "".join(letters[i] for i in rng.integers(0, 26, size=int(rng.integers(lo, hi))))


def _build_random_database(rng, entities_per_domain: int = 8) -> kb.Database:
    """A throwaway database whose entity names are unbounded random words."""
    db = kb.Database()
    used = set()
    for domain in ("restaurant", "hotel"):
        for _ in range(entities_per_domain):
            while True:
                name = f"{_random_word(rng)} {_random_word(rng)}"
                if name not in used:
                    used.add(name)
                    break
            attrs = {"name": name,
                     "phone": "".join(str(d) for d in rng.integers(0, 10, size=6))}
            for slot in INFORMABLE[domain]:
                attrs[slot] = str(rng.choice(VALUES[slot]))
            db.add(kb.EntityRecord(domain, name, attrs))
    return db


def generate_copy_drills(seed: int, n_dialogues: int,
                         dialogues_per_db: int = 4) -> CorpusFile:
    """Task dialogues over throwaway databases of unbounded random entities.

    Names and phones effectively never repeat across drills, so the only
    general way to predict them inside a system response is to carry them
    over from the database line.  Pretraining on drills pushes the
    backbone toward copying, which the copy head makes explicit, while
    exercising the exact task grammar.
    """
    if n_dialogues < 1:
        raise CorpusError("n_dialogues must be >= 1")
    import numpy as np
    rng = np.random.default_rng([seed, 3])
    dialogues = []
    while len(dialogues) < n_dialogues:
        db = _build_random_database(rng)
        for _ in range(min(dialogues_per_db, n_dialogues - len(dialogues))):
            dialogues.append(_generate_dialogue(rng, db, len(dialogues)))
    return CorpusFile(dialogues=dialogues)


# ---------------------------------------------------------------------------
# serialization

def _turn_to_obj(t: DialogueTurn):
    return {
        "user": t.user_utterance,
        "belief": t.belief.slots,
        "db_records": t.db_records,
        "db_total": t.db_total,
        "action": [[a.domain, a.act_type, a.slot, a.value] for a in t.action.acts],
        "response": t.system_response,
    }


def _turn_from_obj(obj) -> DialogueTurn:
    return DialogueTurn(
        user_utterance=obj["user"],
        belief=BeliefState({d: dict(sv) for d, sv in obj["belief"].items()}),
        db_records=[dict(r) for r in obj["db_records"]],
        db_total=obj["db_total"],
        action=SystemAction([DialogueAct(*a) for a in obj["action"]]),
        system_response=obj["response"],
    )


def save_corpus(corpus: CorpusFile, path):
    with open(path, "w") as f:
        for d in corpus.dialogues:
            f.write(json.dumps({
                "format_version": corpus.format_version,
                "goal": d.goal.__dict__,
                "turns": [_turn_to_obj(t) for t in d.turns],
            }) + "\n")


def load_corpus(path, db: kb.Database | None = None) -> CorpusFile:
    """Parse and validate; with a paired db, also check db-consistency."""
    corpus = CorpusFile()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if obj["format_version"] != FORMAT_VERSION:
                    raise CorpusError(f"unsupported format_version {obj['format_version']}")
                goal = GoalSpec(**obj["goal"])
                turns = [_turn_from_obj(t) for t in obj["turns"]]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CorpusError(f"{path} line {lineno}: {e}") from None
            for turn in turns:
                if not turn.user_utterance or not turn.system_response:
                    raise CorpusError(f"{path} line {lineno}: empty utterance")
            corpus.dialogues.append(Dialogue(goal=goal, turns=turns))
    if db is not None:
        validate_db_consistency(corpus, db)
    return corpus


def validate_db_consistency(corpus: CorpusFile, db: kb.Database):
    """Every turn's stored db results must equal a fresh query of its belief."""
    for di, d in enumerate(corpus.dialogues):
        for ti, turn in enumerate(d.turns):
            results, total = kb.query(db, d.goal.domain, turn.belief)
            if turn.db_total != total or turn.db_records != [r.attributes for r in results]:
                raise CorpusError(f"dialogue {di} turn {ti}: stored db results "
                                  f"disagree with query of its belief")


def split(corpus: CorpusFile, ratios: tuple[float, float], seed: int):
    """Deterministic whole-dialogue partition into (train, dev)."""
    import numpy as np
    if len(ratios) != 2 or min(ratios) < 0 or sum(ratios) == 0:
        raise CorpusError(f"bad ratios {ratios}")
    idx = np.arange(len(corpus.dialogues))
    np.random.default_rng(seed).shuffle(idx)
    n_train = round(len(idx) * ratios[0] / sum(ratios))
    train_idx, dev_idx = sorted(idx[:n_train]), sorted(idx[n_train:])
    train = CorpusFile(dialogues=[corpus.dialogues[i] for i in train_idx])
    dev = CorpusFile(dialogues=[corpus.dialogues[i] for i in dev_idx])
    return train, dev


def check_multiwoz_structure(path) -> int:
    """Structural validation of a MultiWOZ-style JSON export.

    Returns the number of dialogues found.  Only structure is checked —
    converting real MultiWOZ data into a CorpusFile is out of scope for a
    desk-scale corpus; this exists so malformed exports fail early.
    """
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise CorpusError(f"{path}: expected a top-level JSON object")
    for name, d in data.items():
        if not isinstance(d, dict) or not isinstance(d.get("log"), list):
            raise CorpusError(f"{path}: dialogue {name!r} has no 'log' list")
        for i, entry in enumerate(d["log"]):
            if not isinstance(entry, dict) or "text" not in entry:
                raise CorpusError(f"{path}: dialogue {name!r} log entry {i} "
                                  f"has no 'text'")
    return len(data)


def corpus_texts(corpus: CorpusFile) -> list[str]:
    """All linearizable text of a corpus (for vocabulary training)."""
    from .dialogue import serialize_turn
    texts = []
    for d in corpus.dialogues:
        for i, turn in enumerate(d.turns):
            texts.append(serialize_turn(d.turns[:i], turn))
    return texts
