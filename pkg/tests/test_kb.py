import pytest

from gpt_acn import kb
from gpt_acn.dialogue import BeliefState


def sample_db():
    db = kb.Database()
    rows = [
        ("golden palace", {"food": "chinese", "area": "north", "pricerange": "cheap"}),
        ("rose garden", {"food": "thai", "area": "south", "pricerange": "expensive"}),
        ("blue lotus", {"food": "chinese", "area": "north", "pricerange": "moderate"}),
        ("white hart", {"food": "british", "area": "centre", "pricerange": "cheap"}),
        ("red dragon", {"food": "chinese", "area": "north", "pricerange": "cheap"}),
    ]
    for name, attrs in rows:
        db.add(kb.EntityRecord("restaurant", name, {"name": name, **attrs}))
    return db


def belief_of(**slots):
    b = BeliefState()
    for s, v in slots.items():
        b.set("restaurant", s, v)
    return b


class TestQuery:
    def test_empty_constraints(self):
        records, total = kb.query(sample_db(), "restaurant", BeliefState())
        assert total == 5
        assert [r.name for r in records] == ["golden palace", "rose garden", "blue lotus"]

    def test_unsatisfiable(self):
        records, total = kb.query(sample_db(), "restaurant", belief_of(food="korean"))
        assert records == [] and total == 0

    def test_single_match(self):
        records, total = kb.query(sample_db(), "restaurant", belief_of(food="thai"))
        assert total == 1 and records[0].name == "rose garden"

    def test_matches_brute_force(self):
        db = sample_db()
        belief = belief_of(food="chinese", area="north")
        records, total = kb.query(db, "restaurant", belief)
        expected = [r for r in db.by_domain["restaurant"]
                    if r.attributes["food"] == "chinese" and r.attributes["area"] == "north"]
        assert total == len(expected)
        assert records == expected[:3]

    def test_dontcare_ignores_slot(self):
        records, total = kb.query(sample_db(), "restaurant",
                                  belief_of(food="chinese", area="dontcare"))
        assert total == 3

    def test_case_insensitive(self):
        _, total = kb.query(sample_db(), "restaurant", belief_of(food="CHINESE"))
        assert total == 3

    def test_unknown_domain(self):
        with pytest.raises(kb.KbError, match="attraction"):
            kb.query(sample_db(), "attraction", BeliefState())

    def test_deterministic(self):
        db = sample_db()
        b = belief_of(food="chinese")
        assert kb.query(db, "restaurant", b) == kb.query(db, "restaurant", b)


class TestFormat:
    def test_empty(self):
        assert kb.format_results([], 0) == "0 matches."

    def test_single_record(self):
        rec = kb.EntityRecord("restaurant", "rose garden",
                              {"name": "rose garden", "food": "thai"})
        assert kb.format_results([rec], 1) == "1 matches. name = rose garden, food = thai"

    def test_no_placeholder_tokens(self):
        records, total = kb.query(sample_db(), "restaurant", BeliefState())
        text = kb.format_results(records, total)
        assert "[" not in text and "<" not in text

    def test_too_many_records(self):
        rec = kb.EntityRecord("restaurant", "x", {"name": "x"})
        with pytest.raises(kb.KbError):
            kb.format_results([rec] * 4, 4)


class TestIo:
    def test_round_trip(self, tmp_path):
        db = sample_db()
        p = tmp_path / "db.jsonl"
        db.save(p)
        loaded = kb.Database.load(p)
        assert loaded.by_domain == db.by_domain

    def test_duplicate_rejected(self):
        db = sample_db()
        with pytest.raises(kb.KbError, match="duplicate"):
            db.add(kb.EntityRecord("restaurant", "golden palace", {"name": "golden palace"}))

    def test_bad_line_reports_position(self, tmp_path):
        p = tmp_path / "db.jsonl"
        p.write_text('{"domain": "restaurant"}\n')
        with pytest.raises(kb.KbError, match="line 1"):
            kb.Database.load(p)

    def test_record_requires_name_attribute(self):
        with pytest.raises(kb.KbError):
            kb.EntityRecord("restaurant", "x", {"food": "thai"})
