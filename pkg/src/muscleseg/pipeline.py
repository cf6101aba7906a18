"""End-to-end evaluation run: cohort + volumes in, report files out."""
from __future__ import annotations

import gzip
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import report
from .analysis import compute_smi, compute_smv, ensemble_mean
from .curation import SplitPlan, build_cohort, load_cohort
from .errors import AllZeroDifferences, ConstantInput, InvalidConfig, MuscleSegError, TooFewPoints
from .metrics import SUBGROUP_KEYS, evaluate_case, subgroup_summary
from .nifti import read_nifti, write_nifti
from .phantom import reference_segment
from .stats import pearson, wilcoxon_signed_rank
from .volume import as_mask, as_probability

log = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "MUSCLESEG_OUTPUT_DIR"
ENV_JOBS = "MUSCLESEG_JOBS"
DEFAULT_SUBGROUP_KEYS = ("location", "sequence", "sex", "age-bin", "race")
ENSEMBLE = "ensemble"
REFERENCE = "reference"


def read_volume_file(path):
    """Read a ``.nii`` or gzip-compressed ``.nii.gz`` file."""
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return read_nifti(data)


def write_volume_file(path, volume, dtype=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = write_nifti(volume, dtype)
    if path.suffix == ".gz":
        # mtime=0 keeps the compressed bytes reproducible
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


@dataclass
class RunConfig:
    cohort: str
    mask: str
    output_dir: str
    volume: Optional[str] = None
    maps: dict = field(default_factory=dict)
    ensemble: list = field(default_factory=list)
    threshold: float = 0.5
    subgroup_keys: list = field(default_factory=lambda: list(DEFAULT_SUBGROUP_KEYS))
    split_plan: Optional[str] = None
    split: str = "all"
    per_slice: bool = False
    smi_height_squared: bool = False
    seed: int = 0
    jobs: int = 1
    base_dir: str = "."

    KEYS = ("cohort", "mask", "output_dir", "volume", "maps", "ensemble", "threshold",
            "subgroup_keys", "split_plan", "split", "per_slice", "smi_height_squared",
            "seed", "jobs")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".", overrides: Optional[dict] = None) -> "RunConfig":
        """Merge config-file values, environment overrides and CLI flags (flags win)."""
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a JSON object")
        unknown = set(data) - set(cls.KEYS)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = dict(data)
        if os.environ.get(ENV_OUTPUT_DIR):
            merged["output_dir"] = os.environ[ENV_OUTPUT_DIR]
        if os.environ.get(ENV_JOBS):
            merged["jobs"] = os.environ[ENV_JOBS]
        for k, v in (overrides or {}).items():
            if v is not None:
                merged[k] = v
        for k in ("cohort", "mask", "output_dir"):
            if not merged.get(k):
                raise InvalidConfig(f"config is missing required key {k!r}")
        try:
            cfg = cls(base_dir=str(base_dir), **merged)
            cfg.threshold = float(cfg.threshold)
            cfg.jobs = int(cfg.jobs)
            cfg.seed = int(cfg.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from None
        cfg.validate()
        return cfg

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.jobs < 1:
            raise InvalidConfig("jobs must be >= 1")
        if not isinstance(self.maps, dict):
            raise InvalidConfig("maps must map a model name to a path template")
        if ENSEMBLE in self.maps or REFERENCE in self.maps:
            raise InvalidConfig(f"map names {ENSEMBLE!r} and {REFERENCE!r} are reserved")
        if self.ensemble:
            if len(self.ensemble) < 2:
                raise InvalidConfig("ensemble needs at least two map names")
            missing = [m for m in self.ensemble if m not in self.maps]
            if missing:
                raise InvalidConfig(f"ensemble names unknown maps: {missing}")
        if not self.maps and not self.volume:
            raise InvalidConfig("config needs probability maps or a volume template")
        bad = [k for k in self.subgroup_keys if k not in (*SUBGROUP_KEYS, "age-bin")]
        if bad:
            raise InvalidConfig(f"unknown subgroup keys {bad}")
        if self.split not in ("all", "test_a", "test_b"):
            raise InvalidConfig(f"split must be all, test_a or test_b, got {self.split!r}")
        if not self.resolve(self.cohort).is_file():
            raise InvalidConfig(f"cohort file not found: {self.resolve(self.cohort)}")
        if self.split_plan and not self.resolve(self.split_plan).is_file():
            raise InvalidConfig(f"split plan not found: {self.resolve(self.split_plan)}")
        for name in ("mask", "volume", *[f"maps.{k}" for k in self.maps]):
            template = self.maps[name[5:]] if name.startswith("maps.") else getattr(self, name)
            if template is not None and "{case_id}" not in template:
                raise InvalidConfig(f"{name} template must contain {{case_id}}: {template!r}")

    @property
    def methods(self) -> list[str]:
        if not self.maps:
            return [REFERENCE]
        return sorted(self.maps) + ([ENSEMBLE] if self.ensemble else [])

    @property
    def primary_method(self) -> str:
        return ENSEMBLE if self.ensemble else self.methods[0]


def load_run_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data, base_dir=path.parent, overrides=overrides)


class CaseFailure(MuscleSegError):
    def __init__(self, case_id: str, message: str):
        super().__init__(f"{case_id}: {message}")
        self.case_id = case_id


class RunFailed(MuscleSegError):
    def __init__(self, failures: list, total: int):
        self.failures = failures
        self.total = total
        super().__init__(f"{len(failures)} of {total} cases failed")

    @property
    def exit_code(self) -> int:
        return 4 if len(self.failures) == self.total else 3


def _profile_for(sequence_label) -> str:
    return "t2fs-like" if sequence_label.base in ("t2", "stir", "tirm") or sequence_label.fat_sat else "t1-like"


def _evaluate_one(cfg: RunConfig, row) -> dict:
    """Score every configured method on one case; returns method -> record."""
    case_id = row.meta.series_id

    def load(template, kind):
        path = cfg.resolve(template.format(case_id=case_id))
        try:
            return read_volume_file(path)
        except FileNotFoundError:
            raise CaseFailure(case_id, f"missing {kind} file {path}") from None
        except (OSError, MuscleSegError, ValueError) as exc:
            raise CaseFailure(case_id, f"unreadable {kind} file {path}: {exc}") from None

    try:
        gt = as_mask(load(cfg.mask, "mask"))
        preds = {}
        if cfg.maps:
            for name in sorted(cfg.maps):
                preds[name] = as_probability(load(cfg.maps[name], f"map {name}"))
            if cfg.ensemble:
                preds[ENSEMBLE] = ensemble_mean([preds[n] for n in cfg.ensemble])
        else:
            preds[REFERENCE] = reference_segment(load(cfg.volume, "volume"), _profile_for(row.sequence))
        meta = dict(location=row.location.category, sequence=row.sequence.key, view=row.meta.view,
                    sex=row.meta.sex, age=row.meta.age, race=row.meta.race)
        out = {}
        for name, pred in preds.items():
            rec = evaluate_case(pred, gt, cfg.threshold, case_id=case_id, per_slice=cfg.per_slice, **meta)
            if row.meta.height_m:
                rec.smi = compute_smi(rec.smv_ml, row.meta.height_m, cfg.smi_height_squared)
            rec.extra["gt_smv_ml"] = compute_smv(gt)
            out[name] = rec
        return out
    except CaseFailure:
        raise
    except (MuscleSegError, ValueError) as exc:
        raise CaseFailure(case_id, str(exc)) from None


def _select_rows(cfg: RunConfig, table):
    rows = table.rows
    if cfg.split_plan and cfg.split != "all":
        plan = SplitPlan.from_dict(json.loads(cfg.resolve(cfg.split_plan).read_text()))
        wanted = set(plan.ids(cfg.split))
        rows = [r for r in rows if r.meta.series_id in wanted]
    return sorted(rows, key=lambda r: r.meta.series_id)


def _statistics(cfg: RunConfig, per_method: dict) -> dict:
    stats = {"threshold": cfg.threshold, "primary_method": cfg.primary_method,
             "n_cases": len(next(iter(per_method.values()))), "overall": {}, "wilcoxon": {},
             "pearson_smv": {}}
    for method, recs in per_method.items():
        dscs = [r.metrics.dsc for r in recs]
        hss = [r.metrics.hss for r in recs if r.metrics.hss is not None]
        stats["overall"][method] = {
            "n": len(recs),
            "mean_dsc": math.fsum(dscs) / len(dscs),
            "mean_hss": math.fsum(hss) / len(hss) if hss else None,
        }
        try:
            pr = pearson([r.extra["gt_smv_ml"] for r in recs], [r.smv_ml for r in recs])
            stats["pearson_smv"][method] = {"r": pr.r, "p_two_sided": pr.p_two_sided, "n": pr.n}
        except (TooFewPoints, ConstantInput) as exc:
            stats["pearson_smv"][method] = {"error": str(exc)}
    if ENSEMBLE in per_method:
        ens = per_method[ENSEMBLE]
        for name in cfg.ensemble:
            diffs = [e.metrics.dsc - s.metrics.dsc for e, s in zip(ens, per_method[name])]
            key = f"{ENSEMBLE}_vs_{name}"
            try:
                res = wilcoxon_signed_rank(diffs, "greater")
                stats["wilcoxon"][key] = {"alternative": "greater", "statistic": res.statistic,
                                          "p_value": res.p_value, "method": res.method,
                                          "n_effective": res.n_effective}
            except AllZeroDifferences as exc:
                stats["wilcoxon"][key] = {"alternative": "greater", "error": str(exc)}
    return stats


def run_evaluate(cfg: RunConfig) -> dict:
    """Evaluate every selected case and write the report bundle.

    Returns a mapping of output file names to paths. Raises
    :class:`RunFailed` (nothing is written) if any case fails.
    """
    try:
        table = build_cohort(load_cohort(cfg.resolve(cfg.cohort)), jobs=cfg.jobs)
    except (ValueError, KeyError) as exc:
        raise InvalidConfig(f"cannot read cohort: {exc}") from None
    rows = _select_rows(cfg, table)
    if not rows:
        raise InvalidConfig("no evaluable cases in cohort")

    def attempt(row):
        try:
            return _evaluate_one(cfg, row), None
        except CaseFailure as exc:
            return None, exc

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(attempt, rows))
    else:
        results = [attempt(r) for r in rows]

    failures = [err for _, err in results if err is not None]
    for err in failures:
        log.error("case failed: %s", err)
    if failures:
        raise RunFailed(failures, len(rows))

    per_method = {m: [res[m] for res, _ in results] for m in cfg.methods}
    out_dir = cfg.resolve(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for method, recs in per_method.items():
        name = f"cases_{method}.csv"
        (out_dir / name).write_text(report.records_csv(recs), encoding="utf-8")
        written[name] = out_dir / name
    subgroups = {m: {k: subgroup_summary(recs, k) for k in cfg.subgroup_keys}
                 for m, recs in per_method.items()}
    for name, payload in (("subgroups.json", subgroups),
                          ("statistics.json", _statistics(cfg, per_method))):
        (out_dir / name).write_text(report.dumps_json(payload), encoding="utf-8")
        written[name] = out_dir / name
    return written
