"""Manifest, split-plan, and rebalancing tests."""
import collections

import numpy as np
import pytest

from milbench.errors import InfeasibleSplit, InfeasibleTask, InvalidData
from milbench.mccv import (MetricTable, RunRecord, SlideManifest, SplitPlan,
                           TaskSpec, balance_classes, class_mapping,
                           make_splits)

MANIFEST = """slide_id,patient_id,cohort,label,grade
s00,p0,main,0,1.5
s01,p0,main,1,2.5
s02,p1,main,0,3.5
s03,p2,main,1,0.5
s04,p3,main,0,1.0
s05,p4,main,1,2.0
s06,p5,main,0,3.0
s07,p6,main,1,
s08,p7,other,0,4.0
s09,p8,main,1,0.8
s10,p9,main,0,1.2
s11,p9,main,1,2.2
"""


@pytest.fixture
def manifest(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("# a comment line\n" + MANIFEST)
    return SlideManifest.from_csv(path)


def binary_task(cohort="main"):
    return TaskSpec(task_id="t", kind="binary", label_column="label",
                    cohort=cohort)


def test_manifest_parsing_and_eligibility(manifest):
    assert len(manifest.records) == 12
    task = binary_task()
    eligible = {r.slide_id for r in manifest.eligible(task)}
    assert "s08" not in eligible  # other cohort
    assert len(eligible) == 11
    grade_task = TaskSpec(task_id="g", kind="regression",
                          label_column="grade", cohort="main")
    assert "s07" not in {r.slide_id for r in manifest.eligible(grade_task)}


def test_manifest_rejects_duplicates(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("slide_id,patient_id,cohort,label\n"
                    "a,p,main,0\na,p,main,1\n")
    with pytest.raises(InvalidData):
        SlideManifest.from_csv(path)


def test_manifest_requires_core_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("slide_id,label\na,0\n")
    with pytest.raises(InvalidData):
        SlideManifest.from_csv(path)


def test_class_mapping_sorted(manifest):
    task = binary_task()
    mapping = class_mapping(manifest.eligible(task), "label")
    assert mapping == {"0": 0, "1": 1}


def test_make_splits_patient_disjoint(manifest):
    plan = make_splits(manifest, binary_task(), seed=0)
    assert plan.grouping == "patient"
    assert len(plan.splits) == 20
    patient_of = {r.slide_id: r.patient_id for r in manifest.records}
    for split in plan.splits:
        train_p = {patient_of[s] for s in split["train_ids"]}
        val_p = {patient_of[s] for s in split["val_ids"]}
        assert not train_p & val_p
        # multi-slide patients p0/p9 stay whole
        assert len(split["train_ids"]) + len(split["val_ids"]) == 11


def test_make_splits_train_fraction_close(manifest):
    plan = make_splits(manifest, binary_task(), seed=0)
    target = round(0.8 * 11)
    for split in plan.splits:
        assert abs(len(split["train_ids"]) - target) <= 2


def test_make_splits_deterministic_and_hash(manifest):
    a = make_splits(manifest, binary_task(), seed=3)
    b = make_splits(manifest, binary_task(), seed=3)
    c = make_splits(manifest, binary_task(), seed=4)
    assert a.to_json() == b.to_json()
    assert a.plan_hash == b.plan_hash
    assert a.plan_hash != c.plan_hash
    back = SplitPlan.from_json(a.to_json())
    assert back.plan_hash == a.plan_hash


def test_make_splits_infeasible(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("slide_id,patient_id,cohort,label\n"
                    "a,p1,main,0\nb,p2,main,1\nc,p3,main,0\n")
    with pytest.raises(InfeasibleTask):
        make_splits(SlideManifest.from_csv(path), binary_task(), seed=0)


def test_make_splits_thin_class(tmp_path):
    path = tmp_path / "thin.csv"
    rows = [f"s{i},p{i},main,0" for i in range(6)] + ["s9,p9,main,1"]
    path.write_text("slide_id,patient_id,cohort,label\n" + "\n".join(rows))
    with pytest.raises(InfeasibleTask):
        make_splits(SlideManifest.from_csv(path), binary_task(), seed=0)


def test_balance_classes_uniform_histogram():
    rng = np.random.default_rng(0)
    ids = [f"s{i}" for i in range(30)]
    labels = {sid: (0 if i < 20 else 1) for i, sid in enumerate(ids)}
    out = balance_classes(ids, labels, rng)
    hist = collections.Counter(labels[s] for s in out)
    assert hist[0] == hist[1] == 10
    assert len(set(out)) == len(out)  # subsampling without replacement


def test_balance_classes_upsamples_to_target():
    rng = np.random.default_rng(0)
    ids = [f"s{i}" for i in range(12)]
    labels = {sid: (0 if i < 9 else 1) for i, sid in enumerate(ids)}
    out = balance_classes(ids, labels, rng, target=9)
    hist = collections.Counter(labels[s] for s in out)
    assert hist[0] == hist[1] == 9


def test_balance_classes_missing_class():
    rng = np.random.default_rng(0)
    with pytest.raises(InfeasibleSplit):
        balance_classes([], {}, rng)


def test_metric_table_roundtrip_and_stats(tmp_path):
    records = []
    for s in range(20):
        for r in range(2):
            records.append(RunRecord(split=s, run=r, seed=s * 2 + r,
                                     metric=0.9 + 0.001 * s, status="ok"))
    records[3] = RunRecord(split=1, run=1, seed=3, metric=None,
                           status="failed:NumericalError:x")
    table = MetricTable(task_id="t", encoder_id="e", metric_kind="auc",
                        plan_hash="abc", runs=records)
    assert table.per_split[1] is None  # incomplete split dropped
    assert table.per_split[0] == pytest.approx(0.9)
    assert table.incomplete
    assert len(table.valid_values) == 19
    path = tmp_path / "t.csv"
    table.write_csv(path, header_comment="stamp")
    back = MetricTable.read_csv(path)
    assert back.plan_hash == "abc"
    assert back.per_split == table.per_split
    assert back.mean == pytest.approx(table.mean)
