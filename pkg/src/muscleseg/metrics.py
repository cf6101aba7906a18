"""Confusion counts, overlap metrics and subgroup summaries."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import binarize, check_threshold, compute_smi, compute_smv
from .errors import EmptyInput
from .volume import BinaryMask, ProbabilityVolume, require_same_grid


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class CaseMetrics:
    """Per-case ratios; ``None`` marks an undefined value."""

    dsc: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    hss: Optional[float]
    gt_empty: bool = False
    pred_empty: bool = False


def confusion_counts(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    require_same_grid(pred.geometry, gt.geometry)
    p = pred.labels.astype(bool)
    g = gt.labels.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def harmonic_mean(se: Optional[float], sp: Optional[float]) -> Optional[float]:
    if se is None or sp is None:
        return None
    if se + sp == 0:
        return 0.0
    return 2.0 * se * sp / (se + sp)


def compute_metrics(c: ConfusionCounts) -> CaseMetrics:
    gt_empty = c.tp + c.fn == 0
    pred_empty = c.tp + c.fp == 0
    denom = 2 * c.tp + c.fp + c.fn
    dsc = 1.0 if denom == 0 else 2 * c.tp / denom
    se = None if gt_empty else c.tp / (c.tp + c.fn)
    sp = None if c.tn + c.fp == 0 else c.tn / (c.tn + c.fp)
    return CaseMetrics(dsc, se, sp, harmonic_mean(se, sp), gt_empty, pred_empty)


def _slice_mean_dsc(p: np.ndarray, g: np.ndarray, axis: int) -> float:
    """Mean per-slice Dice, skipping slices where both masks are empty."""
    tp = np.count_nonzero(p & g, axis=tuple(i for i in range(3) if i != axis))
    ps = np.count_nonzero(p, axis=tuple(i for i in range(3) if i != axis))
    gs = np.count_nonzero(g, axis=tuple(i for i in range(3) if i != axis))
    keep = (ps + gs) > 0
    if not keep.any():
        return 1.0
    return float(np.mean(2.0 * tp[keep] / (ps[keep] + gs[keep])))


@dataclass
class EvaluationRecord:
    case_id: str
    counts: ConfusionCounts
    metrics: CaseMetrics
    smv_ml: float
    smi: Optional[float] = None
    location: str = ""
    sequence: str = ""
    view: str = ""
    sex: str = ""
    age: Optional[float] = None
    race: str = ""
    extra: dict = field(default_factory=dict)


def evaluate_case(pred: ProbabilityVolume, gt: BinaryMask, threshold: float = 0.5,
                  case_id: str = "", height_m: Optional[float] = None,
                  per_slice: bool = False, slice_axis: int = 2, **meta) -> EvaluationRecord:
    """Binarize ``pred`` (>= threshold is foreground) and score it against ``gt``.

    Counts are summed over the whole volume. With ``per_slice`` the DSC is
    replaced by the mean over slices that contain foreground in either mask.
    """
    threshold = check_threshold(threshold)
    require_same_grid(pred.geometry, gt.geometry)
    hard = binarize(pred, threshold)
    counts = confusion_counts(hard, gt)
    metrics = compute_metrics(counts)
    if per_slice:
        dsc = _slice_mean_dsc(hard.labels.astype(bool), gt.labels.astype(bool), slice_axis)
        metrics = CaseMetrics(dsc, metrics.sensitivity, metrics.specificity, metrics.hss,
                              metrics.gt_empty, metrics.pred_empty)
    smv = compute_smv(hard)
    smi = compute_smi(smv, height_m) if height_m else None
    return EvaluationRecord(case_id=case_id, counts=counts, metrics=metrics,
                            smv_ml=smv, smi=smi, **meta)


AGE_BINS = ((18, "<18"), (40, "18-39"), (60, "40-59"))
SUBGROUP_KEYS = ("location", "sequence", "sex", "age-bin", "race", "view")


def age_bin(age: Optional[float]) -> str:
    if age is None:
        return "unknown"
    for upper, label in AGE_BINS:
        if age < upper:
            return label
    return "60+"


def _group_of(record: EvaluationRecord, key: str) -> str:
    if key == "age-bin":
        return age_bin(record.age)
    if key not in SUBGROUP_KEYS:
        raise ValueError(f"unknown subgroup key {key!r}")
    return getattr(record, key) or "unknown"


def _mean(values):
    defined = [v for v in values if v is not None]
    excluded = len(values) - len(defined)
    if not defined:
        return None, excluded
    # fsum keeps the mean independent of record order
    return math.fsum(defined) / len(defined), excluded


def subgroup_summary(records, key: str) -> list[dict]:
    """Per-group n, mean DSC and mean HSS, sorted by group name.

    Undefined metric values are left out of the means and counted in
    ``dsc_excluded`` / ``hss_excluded``.
    """
    records = list(records)
    if not records:
        raise EmptyInput("subgroup_summary needs at least one record")
    groups = defaultdict(list)
    for r in records:
        groups[_group_of(r, key)].append(r)
    out = []
    for name in sorted(groups):
        rows = groups[name]
        mean_dsc, dsc_ex = _mean([r.metrics.dsc for r in rows])
        mean_hss, hss_ex = _mean([r.metrics.hss for r in rows])
        out.append({
            "group": name,
            "n": len(rows),
            "mean_dsc": mean_dsc,
            "mean_hss": mean_hss,
            "dsc_excluded": dsc_ex,
            "hss_excluded": hss_ex,
        })
    return out
