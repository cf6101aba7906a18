"""Series metadata records, cohort loading and the frequency table."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import DuplicateSeriesId, InvalidConfig
from .keywords import BodyLocation, SequenceLabel, classify_body_location, classify_sequence

COHORT_FIELDS = (
    "patient_id", "exam_id", "series_id", "series_description", "protocol_description",
    "view", "age", "sex", "race", "height_m", "year",
)
VIEWS = ("axial", "coronal", "sagittal", "unknown")
_VIEW_ALIASES = {"ax": "axial", "axi": "axial", "tra": "axial", "transverse": "axial",
                 "cor": "coronal", "sag": "sagittal"}
MAX_AGE = 90.0


def _norm_view(view) -> str:
    v = str(view or "").strip().lower()
    v = _VIEW_ALIASES.get(v, v)
    return v if v in VIEWS else "unknown"


def _norm_sex(sex) -> str:
    s = str(sex or "").strip().lower()
    return {"f": "female", "m": "male"}.get(s, s) if s in ("f", "m", "female", "male") else "unknown"


def _opt_float(value) -> Optional[float]:
    if value is None or (isinstance(value, str) and not value.strip()):
        return None
    return float(value)


@dataclass(frozen=True)
class SeriesMetadata:
    patient_id: str
    exam_id: str
    series_id: str
    series_description: str = ""
    protocol_description: str = ""
    view: str = "unknown"
    age: Optional[float] = None
    sex: str = "unknown"
    race: str = "unknown"
    height_m: Optional[float] = None
    year: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "view", _norm_view(self.view))
        object.__setattr__(self, "sex", _norm_sex(self.sex))
        object.__setattr__(self, "race", str(self.race or "unknown").strip().lower() or "unknown")
        age = _opt_float(self.age)
        if age is not None:
            if age < 0:
                raise ValueError(f"{self.series_id}: negative age {age}")
            age = min(age, MAX_AGE)
        object.__setattr__(self, "age", age)
        height = _opt_float(self.height_m)
        if height is not None and not 0.3 < height < 2.6:
            raise ValueError(f"{self.series_id}: height {height} m outside (0.3, 2.6)")
        object.__setattr__(self, "height_m", height)
        year = _opt_float(self.year)
        object.__setattr__(self, "year", None if year is None else int(year))
        for name in ("patient_id", "exam_id", "series_id"):
            object.__setattr__(self, name, str(getattr(self, name)))

    @classmethod
    def from_mapping(cls, row: dict) -> "SeriesMetadata":
        missing = [k for k in ("patient_id", "exam_id", "series_id") if not str(row.get(k) or "").strip()]
        if missing:
            raise InvalidConfig(f"cohort row missing {', '.join(missing)}: {row}")
        return cls(**{k: row.get(k) for k in COHORT_FIELDS if k in row})

    def to_row(self) -> dict:
        row = asdict(self)
        return {k: ("" if row[k] is None else row[k]) for k in COHORT_FIELDS}


def parse_cohort(text: str, fmt: str = "auto") -> list[SeriesMetadata]:
    """Parse cohort records from CSV (with header) or a JSON array."""
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith("[") else "csv"
    if fmt == "json":
        rows = json.loads(text)
        if not isinstance(rows, list):
            raise InvalidConfig("JSON cohort must be an array of objects")
    else:
        reader = csv.DictReader(io.StringIO(text))
        missing = {"patient_id", "exam_id", "series_id"} - set(reader.fieldnames or ())
        if missing:
            raise InvalidConfig(f"cohort CSV header lacks {sorted(missing)}")
        rows = list(reader)
    return [SeriesMetadata.from_mapping(r) for r in rows]


def load_cohort(path) -> list[SeriesMetadata]:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else "auto"
    return parse_cohort(path.read_text(encoding="utf-8"), fmt)


def dump_cohort_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COHORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r.to_row())
    return buf.getvalue()


@dataclass(frozen=True)
class CohortRow:
    meta: SeriesMetadata
    sequence: SequenceLabel
    location: BodyLocation

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.location.category, self.sequence.key, self.meta.view)


@dataclass
class CohortTable:
    rows: list[CohortRow] = field(default_factory=list)
    excluded: list[tuple[SeriesMetadata, str]] = field(default_factory=list)
    frequency: Counter = field(default_factory=Counter)

    def __len__(self):
        return len(self.rows)

    def to_dict(self) -> dict:
        return {
            "n_series": len(self.rows),
            "n_excluded": len(self.excluded),
            "frequency": [
                {"location": loc, "sequence": seq, "view": view, "count": n}
                for (loc, seq, view), n in sorted(self.frequency.items())
            ],
            "excluded": [
                {"series_id": m.series_id, "reason": reason}
                for m, reason in sorted(self.excluded, key=lambda e: e[0].series_id)
            ],
        }


def classify_row(meta: SeriesMetadata) -> CohortRow:
    return CohortRow(meta, classify_sequence(meta.series_description),
                     classify_body_location(meta.protocol_description))


def build_cohort(rows, jobs: int = 1) -> CohortTable:
    """Classify every series, set aside exclusions and count (location, sequence, view)."""
    rows = list(rows)
    seen = set()
    for r in rows:
        if r.series_id in seen:
            raise DuplicateSeriesId(r.series_id)
        seen.add(r.series_id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            classified = list(pool.map(classify_row, rows))
    else:
        classified = [classify_row(r) for r in rows]

    table = CohortTable()
    for row in sorted(classified, key=lambda c: c.meta.series_id):
        if row.sequence.excluded:
            table.excluded.append((row.meta, f"sequence:{row.sequence.reason}"))
        elif row.location.excluded:
            table.excluded.append((row.meta, f"location:{row.location.reason}"))
        else:
            table.rows.append(row)
            table.frequency[row.key] += 1
    return table
