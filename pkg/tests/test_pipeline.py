import json

import pytest

from muscleseg.curation import dump_cohort_csv
from muscleseg.errors import InvalidConfig
from muscleseg.phantom import PhantomConfig, generate_phantom
from muscleseg.pipeline import (
    ENV_JOBS,
    ENV_OUTPUT_DIR,
    RunConfig,
    RunFailed,
    load_run_config,
    run_evaluate,
    write_volume_file,
)
from muscleseg.report import dumps_json, read_records_csv
from muscleseg.volume import mask_to_probability


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    monkeypatch.delenv(ENV_JOBS, raising=False)


def _perfect_cohort(root, n=3):
    metas = []
    for seed in range(n):
        _, gt, meta = generate_phantom(PhantomConfig(dims=(24, 24, 16), seed=seed))
        write_volume_file(root / "masks" / f"{meta.series_id}.nii", gt)
        write_volume_file(root / "maps" / f"{meta.series_id}.nii", mask_to_probability(gt))
        metas.append(meta)
    (root / "cohort.csv").write_text(dump_cohort_csv(metas))
    return {"cohort": "cohort.csv", "mask": "masks/{case_id}.nii",
            "maps": {"model": "maps/{case_id}.nii"}, "output_dir": "out"}


def test_perfect_maps(tmp_path):
    cfg = RunConfig.from_dict(_perfect_cohort(tmp_path), base_dir=tmp_path)
    written = run_evaluate(cfg)
    recs = read_records_csv(written["cases_model.csv"].read_text())
    assert len(recs) == 3 and all(r.metrics.dsc == 1.0 for r in recs)
    stats = json.loads(written["statistics.json"].read_text())
    assert stats["pearson_smv"]["model"]["r"] == 1.0
    assert stats["pearson_smv"]["model"]["p_two_sided"] == 0.0


def test_report_formatting(tmp_path):
    cfg = RunConfig.from_dict(_perfect_cohort(tmp_path), base_dir=tmp_path)
    text = run_evaluate(cfg)["cases_model.csv"].read_text()
    row = text.splitlines()[1].split(",")
    assert row[11] == "1.000000"
    assert dumps_json({"b": 1.0 / 3, "a": {"p_value": 1.23456789e-12}}) == (
        '{\n  "a": {\n    "p_value": 1.234568e-12\n  },\n  "b": 0.333333\n}\n')


def test_config_validation(tmp_path):
    base = _perfect_cohort(tmp_path)
    for bad in ({"threshold": 1.5}, {"jobs": 0}, {"mask": "masks/x.nii"},
                {"maps": {"ensemble": "maps/{case_id}.nii"}}, {"ensemble": ["model"]},
                {"subgroup_keys": ["shoe-size"]}, {"split": "test_c"}, {"cohort": "missing.csv"}):
        with pytest.raises(InvalidConfig):
            RunConfig.from_dict({**base, **bad}, base_dir=tmp_path)
    with pytest.raises(InvalidConfig):
        load_run_config(tmp_path / "nothing.json")


def test_precedence(tmp_path, monkeypatch):
    base = _perfect_cohort(tmp_path)
    monkeypatch.setenv(ENV_JOBS, "3")
    monkeypatch.setenv(ENV_OUTPUT_DIR, "env_out")
    cfg = RunConfig.from_dict({**base, "jobs": 1}, base_dir=tmp_path)
    assert cfg.jobs == 3 and cfg.output_dir == "env_out"
    cfg = RunConfig.from_dict(base, base_dir=tmp_path, overrides={"jobs": 2, "output_dir": "flag"})
    assert cfg.jobs == 2 and cfg.output_dir == "flag"


def test_split_selection(tmp_path):
    base = _perfect_cohort(tmp_path, n=4)
    plan = {"test_a": [{"series_id": "PH000001", "location": "x", "sequence": "t1", "view": "axial"}],
            "test_b": []}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    cfg = RunConfig.from_dict({**base, "split_plan": "plan.json", "split": "test_a"}, base_dir=tmp_path)
    recs = read_records_csv(run_evaluate(cfg)["cases_model.csv"].read_text())
    assert [r.case_id for r in recs] == ["PH000001"]


def test_failure_writes_nothing(tmp_path):
    base = _perfect_cohort(tmp_path)
    (tmp_path / "maps" / "PH000002.nii").unlink()
    cfg = RunConfig.from_dict(base, base_dir=tmp_path)
    with pytest.raises(RunFailed) as info:
        run_evaluate(cfg)
    assert info.value.exit_code == 3 and len(info.value.failures) == 1
    assert not (tmp_path / "out").exists()
