"""Frequency-driven Test-A / Test-B selection.

Test A takes, per body location, series of the location's most frequent
sequence; the abdomen instead takes the most frequent axial sequence and the
most frequent coronal sequence. Test B takes the 2nd to 4th ranked sequences
of each location, one series per distinct sequence, taken from the
sequence's most frequent view and then from the candidate location with the
most patients for that sequence.

Ties between sequences go to the lexicographically smaller name, ties
between series to the smallest series id, so the plan depends only on the
cohort's contents and never on row order.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

from ..errors import EmptyCohort, InvalidConfig
from .cohort import CohortRow, CohortTable

DUAL_VIEW_LOCATIONS = {"abdomen": ("axial", "coronal")}


@dataclass(frozen=True)
class Selection:
    series_id: str
    location: str
    sequence: str
    view: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"series_id": self.series_id, "location": self.location,
                "sequence": self.sequence, "view": self.view, "note": self.note}


@dataclass
class SplitPlan:
    test_a: list[Selection] = field(default_factory=list)
    test_b: list[Selection] = field(default_factory=list)

    def ids(self, split: str) -> list[str]:
        return [s.series_id for s in getattr(self, split)]

    def to_dict(self) -> dict:
        return {"test_a": [s.to_dict() for s in self.test_a],
                "test_b": [s.to_dict() for s in self.test_b]}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        return cls([Selection(**s) for s in data.get("test_a", [])],
                   [Selection(**s) for s in data.get("test_b", [])])


@dataclass
class SplitConfig:
    """``per_location``: Test-A series per location (None keeps all).

    The override lists cover selections the frequency rules cannot make
    (disease, hardware and noise cases chosen by readers).
    """

    per_location: Optional[int] = 4
    test_a_add: list[str] = field(default_factory=list)
    test_b_add: list[str] = field(default_factory=list)
    remove: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "SplitConfig":
        unknown = set(data) - {"per_location", "test_a_add", "test_b_add", "remove"}
        if unknown:
            raise InvalidConfig(f"unknown split config keys {sorted(unknown)}")
        return cls(**data)


def rank_sequences(rows, view: Optional[str] = None) -> list[tuple[str, int]]:
    """Sequences ordered by descending series count, then by name."""
    counts = Counter(r.sequence.key for r in rows if view is None or r.meta.view == view)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def _most_common(counter: Counter) -> str:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def _pick(rows, n: Optional[int], used_patients: set, taken: set) -> list[CohortRow]:
    out = []
    for r in sorted(rows, key=lambda r: r.meta.series_id):
        if n is not None and len(out) >= n:
            break
        if r.meta.series_id in taken or r.meta.patient_id in used_patients:
            continue
        out.append(r)
        used_patients.add(r.meta.patient_id)
    return out


def _by_location(table: CohortTable) -> dict[str, list[CohortRow]]:
    groups = defaultdict(list)
    for r in table.rows:
        groups[r.location.category].append(r)
    return groups


def construct_test_splits(table: CohortTable, config: Optional[SplitConfig] = None) -> SplitPlan:
    config = config or SplitConfig()
    if not table.rows:
        raise EmptyCohort("cannot build test splits from an empty cohort")
    removed = set(config.remove)
    by_id = {r.meta.series_id: r for r in table.rows}
    for sid in (*config.test_a_add, *config.test_b_add):
        if sid not in by_id:
            raise InvalidConfig(f"override names unknown series {sid!r}")

    groups = _by_location(table)
    plan = SplitPlan()
    taken: set[str] = set(removed)

    # Test A
    for loc in sorted(groups):
        rows = groups[loc]
        used_patients: set[str] = set()
        if loc in DUAL_VIEW_LOCATIONS:
            views = DUAL_VIEW_LOCATIONS[loc]
            quota = None if config.per_location is None else config.per_location // len(views)
            parts = []
            for i, view in enumerate(views):
                ranked = rank_sequences(rows, view)
                if not ranked:
                    continue
                seq = ranked[0][0]
                n = quota
                if quota is not None and i == len(views) - 1:
                    n = config.per_location - quota * (len(views) - 1)
                cand = [r for r in rows if r.sequence.key == seq and r.meta.view == view]
                parts.extend((r, f"most frequent {view} sequence") for r in _pick(cand, n, used_patients, taken))
        else:
            ranked = rank_sequences(rows)
            seq = ranked[0][0]
            cand = [r for r in rows if r.sequence.key == seq]
            parts = [(r, "most frequent sequence") for r in _pick(cand, config.per_location, used_patients, taken)]
        for r, note in parts:
            taken.add(r.meta.series_id)
            plan.test_a.append(Selection(r.meta.series_id, loc, r.sequence.key, r.meta.view, note))

    # Test B candidates: ranks 2..4 per location
    candidates: dict[str, list[str]] = defaultdict(list)
    for loc in sorted(groups):
        for seq, _ in rank_sequences(groups[loc])[1:4]:
            candidates[seq].append(loc)

    for seq in sorted(candidates):
        locs = candidates[seq]
        rows = [r for loc in locs for r in groups[loc]
                if r.sequence.key == seq and r.meta.series_id not in taken]
        if not rows:
            continue
        view = _most_common(Counter(r.meta.view for r in rows))
        patients = {loc: len({r.meta.patient_id for r in groups[loc] if r.sequence.key == seq})
                    for loc in locs}
        in_view = [r for r in rows if r.meta.view == view]
        loc = min({r.location.category for r in in_view}, key=lambda l: (-patients[l], l))
        r = min((r for r in in_view if r.location.category == loc), key=lambda r: r.meta.series_id)
        taken.add(r.meta.series_id)
        plan.test_b.append(Selection(r.meta.series_id, loc, seq, view, "less frequent sequence"))

    for split, ids in (("test_a", config.test_a_add), ("test_b", config.test_b_add)):
        for sid in ids:
            if sid in taken and sid not in removed:
                raise InvalidConfig(f"override {sid!r} is already selected")
            r = by_id[sid]
            taken.add(sid)
            getattr(plan, split).append(
                Selection(sid, r.location.category, r.sequence.key, r.meta.view, "manual override"))

    plan.test_a.sort(key=lambda s: (s.location, s.series_id))
    plan.test_b.sort(key=lambda s: (s.location, s.series_id))
    return plan
