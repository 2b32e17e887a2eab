"""Monte-Carlo cross-validation: reproducible splits, class rebalancing,
and the train-twice-average benchmark loop for one (task, encoder) pair.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (InfeasibleSplit, InfeasibleTask, InvalidData,
                     MissingFeatures, NumericalError, UndefinedMetric)
from .featstore import FeatureStore
from .gma import Bag, TrainConfig, train_slide_model
from .metrics import TargetStats
from .seeding import derive_seed, rng_from

N_SPLITS = 20
TRAIN_FRACTION = 0.8
RUNS_PER_SPLIT = 2
MIN_VALID_SPLITS = 15

TASK_KINDS = ("binary", "multiclass", "regression", "tile_level")


@dataclass
class TaskSpec:
    task_id: str
    kind: str
    label_column: str
    cohort: str = ""          # empty: all cohorts
    n_classes: int = 2

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise InvalidData(f"unknown task kind {self.kind!r}")
        if self.kind in ("multiclass", "tile_level") and self.n_classes < 2:
            raise InvalidData("classification tasks need k >= 2")

    @property
    def is_classification(self) -> bool:
        return self.kind in ("binary", "multiclass", "tile_level")


@dataclass
class SlideRecord:
    slide_id: str
    patient_id: str
    cohort: str
    labels: dict[str, str]


class SlideManifest:
    """CSV-backed slide inventory: slide_id,patient_id,cohort,<labels...>."""

    def __init__(self, records: list[SlideRecord]):
        ids = [r.slide_id for r in records]
        if len(set(ids)) != len(ids):
            raise InvalidData("duplicate slide_id in manifest")
        self.records = records
        self.by_id = {r.slide_id: r for r in records}

    @classmethod
    def from_csv(cls, path: str | Path) -> "SlideManifest":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
            required = {"slide_id", "patient_id", "cohort"}
            if not required <= set(reader.fieldnames or []):
                raise InvalidData(f"{path}: manifest must carry {sorted(required)}")
            records = []
            for row in reader:
                labels = {k: v for k, v in row.items() if k not in required}
                records.append(SlideRecord(slide_id=row["slide_id"],
                                           patient_id=row["patient_id"],
                                           cohort=row["cohort"], labels=labels))
        return cls(records)

    def eligible(self, task: TaskSpec) -> list[SlideRecord]:
        out = []
        for r in self.records:
            if task.cohort and r.cohort != task.cohort:
                continue
            if r.labels.get(task.label_column, "") == "":
                continue
            out.append(r)
        return out


def class_mapping(records: list[SlideRecord], label_column: str) -> dict[str, int]:
    """Sorted unique label values -> class indices, deterministic."""
    values = sorted({r.labels[label_column] for r in records})
    return {v: i for i, v in enumerate(values)}


@dataclass
class SplitPlan:
    task_id: str
    seed: int
    grouping: str  # "patient" | "slide"
    splits: list[dict]  # {"train_ids": [...], "val_ids": [...]}

    def to_json(self) -> str:
        doc = {"task_id": self.task_id, "seed": self.seed,
               "grouping": self.grouping, "splits": self.splits}
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        doc = json.loads(text)
        return cls(task_id=doc["task_id"], seed=doc["seed"],
                   grouping=doc["grouping"], splits=doc["splits"])

    @property
    def plan_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def make_splits(manifest: SlideManifest, task: TaskSpec, seed: int,
                group_by_patient: bool = True) -> SplitPlan:
    """20 random 80/20 partitions, shared across every encoder on a task.

    Slides of one patient never straddle a split (unless patient grouping
    is disabled or ids are absent). The PRNG is keyed by (task_id, seed),
    so identical inputs give a byte-identical plan.
    """
    eligible = manifest.eligible(task)
    if len(eligible) < 5:
        raise InfeasibleTask(f"{task.task_id}: needs >= 5 eligible slides")
    if task.is_classification:
        mapping = class_mapping(eligible, task.label_column)
        counts = {}
        for r in eligible:
            cls_ix = mapping[r.labels[task.label_column]]
            counts[cls_ix] = counts.get(cls_ix, 0) + 1
        thin = [k for k, n in counts.items() if n < 2]
        if thin:
            raise InfeasibleTask(
                f"{task.task_id}: classes {thin} have fewer than 2 slides")

    has_patients = all(r.patient_id for r in eligible)
    use_patients = group_by_patient and has_patients
    if use_patients:
        groups: dict[str, list[str]] = {}
        for r in eligible:
            groups.setdefault(r.patient_id, []).append(r.slide_id)
        units = [sorted(v) for _, v in sorted(groups.items())]
    else:
        units = [[r.slide_id] for r in sorted(eligible, key=lambda r: r.slide_id)]

    n_slides = len(eligible)
    target = round(TRAIN_FRACTION * n_slides)
    rng = rng_from("splits", task.task_id, seed)
    splits = []
    for _ in range(N_SPLITS):
        order = rng.permutation(len(units))
        train, val = [], []
        count = 0
        for gi in order:
            unit = units[gi]
            # keep |train| as close to round(0.8 N) as possible without
            # splitting a group
            if count < target and abs(count + len(unit) - target) <= target - count:
                train.extend(unit)
                count += len(unit)
            else:
                val.extend(unit)
        splits.append({"train_ids": sorted(train), "val_ids": sorted(val)})
    return SplitPlan(task_id=task.task_id, seed=seed,
                     grouping="patient" if use_patients else "slide",
                     splits=splits)


def balance_classes(train_ids: list[str], labels: dict[str, int],
                    rng: np.random.Generator,
                    target: int | None = None) -> list[str]:
    """Every class contributes exactly ``target`` ids (default: min count).

    Classes above target are subsampled without replacement; classes below
    a configured target are drawn with replacement.
    """
    by_class: dict[int, list[str]] = {}
    for sid in train_ids:
        by_class.setdefault(labels[sid], []).append(sid)
    if any(len(v) == 0 for v in by_class.values()) or not by_class:
        raise InfeasibleSplit("a class has no training slides")
    if target is None:
        target = min(len(v) for v in by_class.values())
    out: list[str] = []
    for cls_ix in sorted(by_class):
        ids = by_class[cls_ix]
        if len(ids) >= target:
            chosen = rng.choice(len(ids), size=target, replace=False)
        else:
            chosen = rng.choice(len(ids), size=target, replace=True)
        out.extend(ids[i] for i in chosen)
    return out


@dataclass
class RunRecord:
    split: int
    run: int
    seed: int
    metric: float | None
    status: str  # "ok" | "failed:<reason>"


@dataclass
class MetricTable:
    task_id: str
    encoder_id: str
    metric_kind: str  # "auc" | "rmse"
    plan_hash: str
    runs: list[RunRecord]
    per_split: list[float | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.per_split:
            self.per_split = []
            for s in range(N_SPLITS):
                vals = [r.metric for r in self.runs
                        if r.split == s and r.status == "ok"]
                if len(vals) == RUNS_PER_SPLIT:
                    self.per_split.append(float(np.mean(vals)))
                else:
                    self.per_split.append(None)

    @property
    def valid_values(self) -> list[float]:
        return [v for v in self.per_split if v is not None]

    @property
    def incomplete(self) -> bool:
        return any(v is None for v in self.per_split)

    @property
    def mean(self) -> float:
        return float(np.mean(self.valid_values))

    @property
    def std(self) -> float:
        return float(np.std(self.valid_values))

    def write_csv(self, path: str | Path, header_comment: str | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(f"# metric={self.metric_kind} plan={self.plan_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["task", "encoder", "split", "run0", "run1", "value"])
            run_map = {(r.split, r.run): r for r in self.runs}
            for s in range(N_SPLITS):
                r0 = run_map.get((s, 0))
                r1 = run_map.get((s, 1))
                fmt = lambda r: "" if r is None or r.metric is None else repr(r.metric)
                v = self.per_split[s]
                writer.writerow([self.task_id, self.encoder_id, s,
                                 fmt(r0), fmt(r1), "" if v is None else repr(v)])
            writer.writerow([self.task_id, self.encoder_id, "summary",
                             repr(self.mean), repr(self.std), ""])

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetricTable":
        metric_kind, plan_hash = "auc", ""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if tok.startswith("metric="):
                            metric_kind = tok.split("=", 1)[1]
                        elif tok.startswith("plan="):
                            plan_hash = tok.split("=", 1)[1]
                    continue
                rows.append(next(csv.reader([line])))
        header, rows = rows[0], rows[1:]
        runs = []
        task_id = encoder_id = None
        for r in rows:
            task_id, encoder_id = r[0], r[1]
            if r[2] == "summary":
                continue
            s = int(r[2])
            for run_ix, cell in ((0, r[3]), (1, r[4])):
                if cell:
                    runs.append(RunRecord(split=s, run=run_ix, seed=0,
                                          metric=float(cell), status="ok"))
                else:
                    runs.append(RunRecord(split=s, run=run_ix, seed=0,
                                          metric=None, status="failed:missing"))
        return cls(task_id=task_id, encoder_id=encoder_id,
                   metric_kind=metric_kind, plan_hash=plan_hash, runs=runs)


def _load_bags(store: FeatureStore, encoder_id: str, slide_ids, targets,
               cache: dict) -> list[Bag]:
    bags = []
    for sid in slide_ids:
        if sid not in cache:
            cache[sid] = store.load(encoder_id, sid).data.astype(np.float64)
        bags.append(Bag(features=cache[sid], target=targets[sid]))
    return bags


def run_single(task: TaskSpec, plan: SplitPlan, encoder_id: str,
               store: FeatureStore, manifest: SlideManifest,
               split_ix: int, run_ix: int,
               config: TrainConfig = TrainConfig(),
               rebalance_target: int | None = None,
               cache: dict | None = None) -> RunRecord:
    """One training run: rebalance (classification), train, score validation.

    Regression targets are z-scored with train-split statistics; the
    recorded metric is RMSE in original units (lower is better).
    """
    seed = derive_seed("run", task.task_id, plan.seed, split_ix, run_ix)
    split = plan.splits[split_ix]
    eligible = manifest.eligible(task)
    cache = {} if cache is None else cache
    try:
        if task.is_classification:
            mapping = class_mapping(eligible, task.label_column)
            labels = {r.slide_id: mapping[r.labels[task.label_column]]
                      for r in eligible}
            rng = np.random.Generator(np.random.PCG64(seed))
            train_ids = balance_classes(split["train_ids"], labels, rng,
                                        target=rebalance_target)
            n_classes = len(mapping)
            train = _load_bags(store, encoder_id, train_ids, labels, cache)
            val = _load_bags(store, encoder_id, split["val_ids"], labels, cache)
            result = train_slide_model(train, val, "classification", seed,
                                       config, n_classes=n_classes)
            return RunRecord(split=split_ix, run=run_ix, seed=seed,
                             metric=result.val_metric, status="ok")
        # regression
        targets = {r.slide_id: float(r.labels[task.label_column])
                   for r in eligible}
        stats = TargetStats.from_targets(
            [targets[sid] for sid in split["train_ids"]])
        normed = {sid: (t - stats.mean) / stats.std for sid, t in targets.items()}
        train = _load_bags(store, encoder_id, split["train_ids"], normed, cache)
        val = _load_bags(store, encoder_id, split["val_ids"], normed, cache)
        result = train_slide_model(train, val, "regression", seed, config)
        # val_metric is negative normalized RMSE; report original units
        return RunRecord(split=split_ix, run=run_ix, seed=seed,
                         metric=-result.val_metric * stats.std, status="ok")
    except (NumericalError, InfeasibleSplit, UndefinedMetric) as exc:
        return RunRecord(split=split_ix, run=run_ix, seed=seed, metric=None,
                         status=f"failed:{type(exc).__name__}:{exc}")


def run_benchmark(task: TaskSpec, plan: SplitPlan, encoder_id: str,
                  store: FeatureStore, manifest: SlideManifest,
                  config: TrainConfig = TrainConfig(),
                  rebalance_target: int | None = None,
                  existing: list[RunRecord] | None = None,
                  workers: int = 1) -> MetricTable:
    """All 20 splits x 2 runs; each per-split value is the mean of its two
    runs. ``existing`` records (from a prior interrupted run) are reused.
    """
    if task.kind == "tile_level":
        from .tileprobe import run_tile_benchmark

        return run_tile_benchmark(task, plan, encoder_id, store, manifest,
                                  config, existing=existing)
    for split in plan.splits:
        for sid in split["train_ids"] + split["val_ids"]:
            if not store.exists(encoder_id, sid):
                raise MissingFeatures(sid)
    done = {(r.split, r.run): r for r in (existing or []) if r.status == "ok"}
    todo = [(s, r) for s in range(N_SPLITS) for r in range(RUNS_PER_SPLIT)
            if (s, r) not in done]
    records = list(done.values())
    if workers > 1 and todo:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_single, task, plan, encoder_id, store,
                                   manifest, s, r, config, rebalance_target)
                       for s, r in todo]
            records.extend(f.result() for f in futures)
    else:
        cache: dict = {}
        for s, r in todo:
            records.append(run_single(task, plan, encoder_id, store, manifest,
                                      s, r, config, rebalance_target,
                                      cache=cache))
    records.sort(key=lambda r: (r.split, r.run))
    metric_kind = "rmse" if task.kind == "regression" else "auc"
    return MetricTable(task_id=task.task_id, encoder_id=encoder_id,
                       metric_kind=metric_kind, plan_hash=plan.plan_hash,
                       runs=records)
