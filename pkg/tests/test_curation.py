import csv
import json
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muscleseg.curation import (
    LOCATIONS,
    SeriesMetadata,
    SplitConfig,
    build_cohort,
    classify_body_location,
    classify_sequence,
    construct_test_splits,
    load_cohort,
    normalized_cross_correlation,
    parse_cohort,
    verify_pair_alignment,
)
from muscleseg.curation.splits import rank_sequences
from muscleseg.errors import DuplicateSeriesId, EmptyCohort, InvalidConfig
from muscleseg.volume import ScalarVolume, VolumeGeometry

from conftest import FIXTURES, scalar

# ranks 2..4 per location in the fixture cohort, counted by hand from its rows
EXPECTED_TEST_B = {
    "se-group", "t2 fs", "vibe-group+c",   # abdomen
    "stir", "pd fs",                       # hip (t2 fs shared)
    "pd",                                  # knee (pd fs, t2 fs shared)
    "t1 fs",                               # shoulder
    "t2",                                  # lumbar spine (stir shared)
    "t1+c",                                # misc (t2 fs shared)
    "dixon-t1 in-phase",                   # thigh
}


def _fixture_rows():
    with open(FIXTURES / "sequence_descriptions.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_fixture_has_25_descriptions():
    assert len(_fixture_rows()) == 25


@pytest.mark.parametrize("row", _fixture_rows(), ids=lambda r: r["series_description"])
def test_sequence_fixture(row):
    label = classify_sequence(row["series_description"])
    assert label.base == row["base"]
    assert label.fat_sat == bool(int(row["fat_sat"]))
    assert label.phase == row["phase"]
    assert label.contrast == bool(int(row["contrast"]))
    assert label.excluded == bool(int(row["excluded"]))
    if label.excluded:
        assert label.reason == row["reason"]


def test_sequence_examples():
    lab = classify_sequence("AX T1 DIXON WATER")
    assert (lab.base, lab.phase, lab.fat_sat, lab.contrast) == ("dixon-t1", "water", False, False)
    assert lab.key == "dixon-t1 water"
    lab = classify_sequence("SAG T2 FS")
    assert lab.base == "t2" and lab.fat_sat and lab.key == "t2 fs"
    lab = classify_sequence("localizer")
    assert lab.excluded and lab.reason == "localizer"
    lab = classify_sequence("COR LAVA +C")
    assert lab.base == "vibe-group" and lab.contrast


def test_sequence_case_insensitive():
    assert classify_sequence("ax t1 dixon water") == classify_sequence("AX T1 DIXON WATER")


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=40))
def test_classifiers_total(text):
    lab = classify_sequence(text)
    if lab.excluded:
        assert lab.reason
    if lab.phase != "none":
        assert lab.base in ("dixon", "dixon-t1") or any(
            w in text.lower() for w in ("water", "fat", "phase"))
    loc = classify_body_location(text)
    assert loc.category in LOCATIONS or loc.reason in ("head-face", "multi-area", "unrecognized")
    if loc.excluded:
        assert loc.reason in ("head-face", "multi-area", "unrecognized")


@pytest.mark.parametrize("text, expected", [
    ("MRI hip left with and without contrast", "hip"),
    ("MRI wrist right", "misc"),
    ("MRI ankle", "misc"),
    ("MRI knee right without contrast", "knee"),
    ("MRI lumbar spine", "lumbar-spine"),
    ("MRI abdomen and pelvis", "abdomen"),
    ("MRI femur right", "thigh"),
])
def test_body_location(text, expected):
    assert classify_body_location(text).category == expected


@pytest.mark.parametrize("text, reason", [
    ("MRI brain without contrast", "head-face"),
    ("MRI cervical spine", "head-face"),
    ("MRI whole body screening", "multi-area"),
    ("MRI knee and shoulder", "multi-area"),
    ("CT something", "unrecognized"),
])
def test_body_location_excluded(text, reason):
    loc = classify_body_location(text)
    assert loc.excluded and loc.reason == reason


def _meta(sid, desc, proto="MRI hip", view="coronal", patient=None):
    return SeriesMetadata(patient or f"P{sid}", f"E{sid}", sid, desc, proto, view)


def test_build_cohort_counts():
    rows = [_meta(f"S{i}", "COR T1") for i in range(3)] + [_meta("S9", "localizer")]
    table = build_cohort(rows)
    assert table.frequency[("hip", "t1", "coronal")] == 3
    assert len(table.excluded) == 1 and table.excluded[0][1] == "sequence:localizer"
    assert len(build_cohort([])) == 0


def test_build_cohort_duplicate():
    with pytest.raises(DuplicateSeriesId):
        build_cohort([_meta("S1", "COR T1"), _meta("S1", "COR T2")])


def test_frequency_matches_multiset():
    table = build_cohort(load_cohort(FIXTURES / "frequency_cohort.csv"))
    assert table.frequency == Counter(r.key for r in table.rows)
    assert sum(table.frequency.values()) == len(table.rows)


def test_metadata_validation():
    m = SeriesMetadata("p", "e", "s", age=95, sex="F", view="AX")
    assert m.age == 90 and m.sex == "female" and m.view == "axial"
    with pytest.raises(ValueError):
        SeriesMetadata("p", "e", "s", age=-1)
    with pytest.raises(ValueError):
        SeriesMetadata("p", "e", "s", height_m=3.0)
    with pytest.raises(InvalidConfig):
        parse_cohort('[{"exam_id": "e", "series_id": "s"}]')


def test_parse_json_and_csv_agree():
    rows = load_cohort(FIXTURES / "frequency_cohort.csv")
    again = parse_cohort(json.dumps([r.to_row() for r in rows]))
    assert again == rows


@pytest.fixture(scope="module")
def fixture_plan():
    table = build_cohort(load_cohort(FIXTURES / "frequency_cohort.csv"))
    return table, construct_test_splits(table)


def test_abdomen_test_a(fixture_plan):
    _, plan = fixture_plan
    abd = {(s.sequence, s.view) for s in plan.test_a if s.location == "abdomen"}
    assert abd == {("dixon-t1 water", "axial"), ("se-group", "coronal")}


def test_test_a_uses_top_sequence(fixture_plan):
    _, plan = fixture_plan
    for s in plan.test_a:
        if s.location != "abdomen":
            assert s.sequence == "t1"


def test_test_b_sequences(fixture_plan):
    _, plan = fixture_plan
    seqs = [s.sequence for s in plan.test_b]
    assert len(seqs) == len(set(seqs))
    assert set(seqs) == EXPECTED_TEST_B


def test_split_invariants(fixture_plan):
    table, plan = fixture_plan
    a, b = set(plan.ids("test_a")), set(plan.ids("test_b"))
    assert not a & b
    known = {r.meta.series_id for r in table.rows}
    assert a | b <= known
    excluded = {m.series_id for m, _ in table.excluded}
    assert not (a | b) & excluded


def test_split_permutation_invariant():
    rows = load_cohort(FIXTURES / "frequency_cohort.csv")
    ref = construct_test_splits(build_cohort(rows)).to_dict()
    r = random.Random(3)
    for _ in range(5):
        shuffled = rows[:]
        r.shuffle(shuffled)
        assert construct_test_splits(build_cohort(shuffled)).to_dict() == ref


def test_single_sequence_location_has_no_test_b():
    rows = [_meta(f"S{i}", "COR T1") for i in range(5)]
    plan = construct_test_splits(build_cohort(rows))
    assert plan.test_b == [] and len(plan.test_a) == 4


def test_second_place_tie_breaks_by_name():
    rows = [_meta(f"A{i}", "COR T1") for i in range(5)]
    rows += [_meta(f"B{i}", "COR STIR") for i in range(2)]
    rows += [_meta(f"C{i}", "COR PD") for i in range(2)]
    table = build_cohort(rows)
    plan = construct_test_splits(table, SplitConfig(per_location=4))
    assert [s for s, _ in rank_sequences(table.rows)] == ["t1", "pd", "stir"]
    assert {s.sequence for s in plan.test_b} == {"pd", "stir"}


def test_empty_cohort():
    with pytest.raises(EmptyCohort):
        construct_test_splits(build_cohort([]))


def test_overrides():
    rows = [_meta(f"S{i}", "COR T1") for i in range(6)]
    plan = construct_test_splits(build_cohort(rows), SplitConfig(test_b_add=["S5"]))
    assert plan.ids("test_b") == ["S5"]
    with pytest.raises(InvalidConfig):
        construct_test_splits(build_cohort(rows), SplitConfig(test_b_add=["S0"]))


def test_alignment(rng):
    data = rng.random((6, 7, 5)) * 255
    ref = scalar(data)
    res = verify_pair_alignment(ref, ref)
    assert res.aligned and res.ncc == pytest.approx(1.0, abs=1e-12)
    assert verify_pair_alignment(ref, scalar(data[:, :, :4])).reason == "dims"
    inv = verify_pair_alignment(ref, scalar(255 - data))
    assert not inv.aligned and inv.reason == "ncc"
    assert inv.ncc == pytest.approx(-1.0, abs=1e-12)
    assert verify_pair_alignment(ref, scalar(data, (1.0, 1.0, 2.0))).reason == "spacing"
    aff = np.eye(4)
    aff[0, 3] = 5.0
    shifted = ScalarVolume(VolumeGeometry(data.shape, (1, 1, 1), aff), data)
    assert verify_pair_alignment(ref, shifted).reason == "affine"


def test_alignment_symmetric_geometry(rng):
    a = scalar(rng.random((4, 4, 4)))
    b = scalar(rng.random((4, 4, 4)), (1, 1, 1.5))
    assert verify_pair_alignment(a, b).reason == verify_pair_alignment(b, a).reason == "spacing"
    assert normalized_cross_correlation(np.ones(5), np.ones(5)) == 1.0
    assert normalized_cross_correlation(np.ones(5), np.arange(5)) == 0.0
