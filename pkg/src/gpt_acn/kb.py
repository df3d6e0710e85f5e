"""In-memory entity database: constraint queries over belief states,
truncated to three results, rendered to natural text."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dialogue import BeliefState, norm_value, render_db

MAX_RESULTS = 3


class KbError(ValueError):
    pass


@dataclass(frozen=True)
class EntityRecord:
    domain: str
    name: str
    attributes: dict[str, str]

    def __post_init__(self):
        if self.attributes.get("name") != self.name:
            raise KbError(f"record {self.name!r}: attributes must carry its name")


@dataclass
class Database:
    """Records grouped per domain in insertion order of the data file."""

    by_domain: dict[str, list[EntityRecord]] = field(default_factory=dict)

    def add(self, record: EntityRecord):
        bucket = self.by_domain.setdefault(record.domain, [])
        if any(r.name == record.name for r in bucket):
            raise KbError(f"duplicate record ({record.domain}, {record.name})")
        bucket.append(record)

    def domains(self):
        return list(self.by_domain)

    def save(self, path):
        with open(path, "w") as f:
            for records in self.by_domain.values():
                for r in records:
                    f.write(json.dumps({"domain": r.domain, "name": r.name,
                                        "attributes": r.attributes}) + "\n")

    @classmethod
    def load(cls, path) -> "Database":
        db = cls()
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    record = EntityRecord(obj["domain"], obj["name"], obj["attributes"])
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise KbError(f"{path} line {lineno}: bad record ({e})") from None
                db.add(record)
        return db


def query(db: Database, domain: str, belief: BeliefState):
    """Records matching every constraint of belief[domain], first 3 in
    canonical order, plus the total match count.  'dontcare' skips a slot."""
    if domain not in db.by_domain:
        raise KbError(f"unknown domain {domain!r}")
    constraints = {s: v for s, v in belief.slots.get(domain, {}).items()
                   if norm_value(v) != "dontcare"}
    matches = []
    for record in db.by_domain[domain]:
        ok = all(norm_value(record.attributes.get(slot, "")) == norm_value(value)
                 for slot, value in constraints.items())
        if ok:
            matches.append(record)
    return matches[:MAX_RESULTS], len(matches)


def format_results(records: list[EntityRecord], total_count: int) -> str:
    if len(records) > MAX_RESULTS:
        raise KbError(f"at most {MAX_RESULTS} records may be rendered")
    return render_db([r.attributes for r in records], total_count)
