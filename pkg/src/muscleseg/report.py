"""Deterministic CSV/JSON emission for evaluation reports.

All floats are written with six decimals (p-values with six significant
digits in scientific form so small values survive), JSON keys are sorted and
rows are ordered by case id, so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math

CASE_FIELDS = (
    "case_id", "location", "sequence", "view", "sex", "age", "race",
    "tp", "fp", "fn", "tn", "dsc", "sensitivity", "specificity", "hss", "smv_ml", "smi",
)
_P_KEYS = {"p_value", "p_two_sided"}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _clean(obj, key=None):
    if isinstance(obj, dict):
        return {k: _clean(v, k) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        if key in _P_KEYS:
            return float(f"{obj:.6e}")
        return float(f"{obj:.6f}")
    if hasattr(obj, "item"):  # numpy scalar
        return _clean(obj.item(), key)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def record_row(rec) -> dict:
    m, c = rec.metrics, rec.counts
    return {
        "case_id": rec.case_id, "location": rec.location, "sequence": rec.sequence,
        "view": rec.view, "sex": rec.sex,
        "age": "" if rec.age is None else f"{rec.age:g}",
        "race": rec.race, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
        "dsc": fmt(m.dsc), "sensitivity": fmt(m.sensitivity),
        "specificity": fmt(m.specificity), "hss": fmt(m.hss),
        "smv_ml": fmt(rec.smv_ml), "smi": fmt(rec.smi),
    }


def records_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CASE_FIELDS, lineterminator="\n")
    writer.writeheader()
    for rec in sorted(records, key=lambda r: r.case_id):
        writer.writerow(record_row(rec))
    return buf.getvalue()


def read_records_csv(text: str) -> list:
    """Parse a cases CSV back into :class:`EvaluationRecord` objects."""
    from .metrics import CaseMetrics, ConfusionCounts, EvaluationRecord

    def opt(v):
        return None if v == "" else float(v)

    out = []
    for row in csv.DictReader(io.StringIO(text)):
        gt_empty = int(row["tp"]) + int(row["fn"]) == 0
        pred_empty = int(row["tp"]) + int(row["fp"]) == 0
        out.append(EvaluationRecord(
            case_id=row["case_id"],
            counts=ConfusionCounts(int(row["tp"]), int(row["fp"]), int(row["fn"]), int(row["tn"])),
            metrics=CaseMetrics(opt(row["dsc"]), opt(row["sensitivity"]), opt(row["specificity"]),
                                opt(row["hss"]), gt_empty, pred_empty),
            smv_ml=float(row["smv_ml"]), smi=opt(row["smi"]),
            location=row["location"], sequence=row["sequence"], view=row["view"],
            sex=row["sex"], age=opt(row["age"]), race=row["race"],
        ))
    return out
