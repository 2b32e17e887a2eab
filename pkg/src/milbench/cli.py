"""Command-line orchestration.

Subcommands: tile, mock-encode, splits, benchmark, compare, region-map,
synth. Exit codes: 0 success, 1 configuration error, 2 partial data
failure. Every emitted file carries a header comment with the tool
version, config hash, and seed, so equal configurations reproduce equal
bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .errors import MilbenchError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _stamp(config_hash: str, seed) -> str:
    return f"milbench v{__version__} config={config_hash} seed={seed}"


def cmd_tile(args) -> int:
    from .preprocess import (SlideGeometry, build_tissue_mask,
                             default_downsample, enumerate_tiles,
                             load_thumbnail_png, write_mask_png,
                             write_tile_grid_csv)

    thumb_dir = Path(args.thumbnails)
    geom_dir = Path(args.geometries)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    thumbs = sorted(thumb_dir.glob("*.png"))
    if not thumbs:
        print(f"warning: no thumbnails under {thumb_dir}", file=sys.stderr)
        return EXIT_OK
    cfg = {"cmd": "tile", "tile_px": args.tile_px, "target_mpp": args.target_mpp,
           "min_tissue_frac": args.min_tissue_frac}
    stamp = _stamp(_config_hash(cfg), "-")
    failures = []
    for thumb_path in thumbs:
        stem = thumb_path.stem
        try:
            geom = SlideGeometry.from_json(geom_dir / f"{stem}.json")
            thumb = load_thumbnail_png(thumb_path, geom)
            mask = build_tissue_mask(thumb)
            grid = enumerate_tiles(mask, geom, thumb.downsample,
                                   tile_px=args.tile_px,
                                   target_mpp=args.target_mpp,
                                   min_tissue_frac=args.min_tissue_frac)
            write_tile_grid_csv(grid, out_dir / f"{geom.slide_id}.tiles.csv",
                                header_comment=stamp)
            write_mask_png(mask, out_dir / f"{geom.slide_id}.mask.png")
        except (MilbenchError, OSError, KeyError, ValueError) as exc:
            failures.append((stem, exc))
            print(f"failed: {stem}: {exc}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_mock_encode(args) -> int:
    from .featstore import FeatureStore, mock_encode
    from .preprocess import read_tile_grid_csv

    store = FeatureStore(args.out)
    grids = sorted(Path(args.grids).glob("*.tiles.csv"))
    if not grids:
        print(f"error: no tile grids under {args.grids}", file=sys.stderr)
        return EXIT_CONFIG
    for grid_path in grids:
        grid = read_tile_grid_csv(grid_path)
        m = mock_encode(grid, dim=args.dim, seed=args.seed)
        if args.encoder_id:
            m.encoder_id = args.encoder_id
        store.save(m)
    return EXIT_OK


def cmd_splits(args) -> int:
    from .mccv import SlideManifest, TaskSpec, make_splits

    manifest = SlideManifest.from_csv(args.manifest)
    task = TaskSpec(task_id=args.task_id, kind=args.kind,
                    label_column=args.label_column, cohort=args.cohort,
                    n_classes=args.n_classes)
    plan = make_splits(manifest, task, seed=args.seed,
                       group_by_patient=not args.no_patient_grouping)
    Path(args.out).write_text(plan.to_json())
    print(f"{plan.task_id}: 20 splits, grouping={plan.grouping}, "
          f"hash={plan.plan_hash}")
    return EXIT_OK


def _load_benchmark_config(args):
    with open(args.config, "rb") as fh:
        doc = tomllib.load(fh)
    run = doc.get("run", {})
    if args.output_root:
        run["output_root"] = args.output_root
    if args.seed is not None:
        run["seed"] = args.seed
    if args.workers is not None:
        run["workers"] = args.workers
    for key in ("manifest", "feature_root", "output_root", "encoders"):
        if key not in run:
            raise MilbenchError(f"config missing run.{key}")
    run.setdefault("seed", 0)
    run.setdefault("workers", 1)
    run.setdefault("group_by_patient", True)
    tasks = doc.get("task", [])
    if not tasks:
        raise MilbenchError("config declares no [[task]] entries")
    hyper = doc.get("hyper", {})
    return run, tasks, hyper


def _train_config(hyper: dict):
    from .gma import TrainConfig

    cfg = TrainConfig()
    for key in ("epochs", "hidden", "lr_peak", "weight_decay",
                "warmup_frac", "lr_final"):
        if key in hyper:
            setattr(cfg, key, hyper[key])
    return cfg


def cmd_benchmark(args) -> int:
    from .featstore import FeatureStore
    from .mccv import (MIN_VALID_SPLITS, RunRecord, SlideManifest, TaskSpec,
                       make_splits, run_benchmark)

    try:
        run, task_docs, hyper = _load_benchmark_config(args)
    except (MilbenchError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    manifest_path = Path(run["manifest"])
    feature_root = Path(run["feature_root"])
    if not manifest_path.is_file():
        print(f"error: manifest {manifest_path} not found", file=sys.stderr)
        return EXIT_CONFIG
    # validation-first: every declared encoder must have a feature directory
    missing = [e for e in run["encoders"] if not (feature_root / e).is_dir()]
    if missing:
        print(f"error: unknown encoders (no features): {missing}",
              file=sys.stderr)
        return EXIT_CONFIG

    from . import _kernels

    cfg_hash = _config_hash({"run": {k: run[k] for k in sorted(run)},
                             "tasks": task_docs, "hyper": hyper,
                             "backend": _kernels.BACKEND})
    stamp = _stamp(cfg_hash, run["seed"])
    manifest = SlideManifest.from_csv(manifest_path)
    store = FeatureStore(feature_root)
    out_root = Path(run["output_root"])
    (out_root / "plans").mkdir(parents=True, exist_ok=True)
    (out_root / "tables").mkdir(parents=True, exist_ok=True)
    (out_root / "runs").mkdir(parents=True, exist_ok=True)

    train_cfg = _train_config(hyper)
    failures = []
    summary_rows = []
    for doc in task_docs:
        task = TaskSpec(task_id=doc["task_id"], kind=doc["kind"],
                        label_column=doc["label_column"],
                        cohort=doc.get("cohort", ""),
                        n_classes=doc.get("n_classes", 2))
        plan_path = out_root / "plans" / f"{task.task_id}.json"
        try:
            plan = make_splits(manifest, task, seed=run["seed"],
                               group_by_patient=run["group_by_patient"])
        except MilbenchError as exc:
            failures.append(f"{task.task_id}: {exc}")
            print(f"failed: {task.task_id}: {exc}", file=sys.stderr)
            continue
        plan_path.write_text(plan.to_json())
        for encoder_id in run["encoders"]:
            journal = out_root / "runs" / f"{task.task_id}__{encoder_id}.jsonl"
            existing = _read_journal(journal)
            try:
                table = run_benchmark(task, plan, encoder_id, store, manifest,
                                      config=train_cfg, existing=existing,
                                      workers=run["workers"])
            except MilbenchError as exc:
                failures.append(f"{task.task_id}/{encoder_id}: {exc}")
                print(f"failed: {task.task_id}/{encoder_id}: {exc}",
                      file=sys.stderr)
                continue
            _write_journal(journal, table.runs)
            table.write_csv(out_root / "tables"
                            / f"{task.task_id}__{encoder_id}.csv",
                            header_comment=stamp)
            summary_rows.append((task.task_id, encoder_id, table.metric_kind,
                                 table.mean, table.std, table.incomplete))
    with open(out_root / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("task,encoder,metric,mean,std,incomplete\n")
        for row in summary_rows:
            fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]!r},{row[4]!r},"
                     f"{int(row[5])}\n")
    return EXIT_PARTIAL if failures else EXIT_OK


def _read_journal(path: Path):
    from .mccv import RunRecord

    if not path.is_file():
        return []
    records = []
    for line in path.read_text().splitlines():
        if line.strip():
            records.append(RunRecord(**json.loads(line)))
    return records


def _write_journal(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(records, key=lambda r: (r.split, r.run)):
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def cmd_compare(args) -> int:
    from .mccv import MIN_VALID_SPLITS, MetricTable
    from .stats import compare_encoders, write_report_files

    tables = [MetricTable.read_csv(p)
              for p in sorted(Path(args.tables).glob("*.csv"))
              if p.name != "summary.csv"]
    by_task: dict[str, dict[str, list]] = {}
    kinds: dict[str, str] = {}
    hashes: dict[str, set] = {}
    for t in tables:
        by_task.setdefault(t.task_id, {})[t.encoder_id] = t.per_split
        kinds[t.task_id] = "rmse" if t.metric_kind == "rmse" else "auc"
        hashes.setdefault(t.task_id, set()).add(t.plan_hash)
    if not by_task or max(len(v) for v in by_task.values()) < 2:
        print("error: need metric tables for at least 2 encoders",
              file=sys.stderr)
        return EXIT_CONFIG
    per_task = {}
    for task, dists in by_task.items():
        if len(dists) < 2:
            print(f"skipped {task}: fewer than 2 encoders", file=sys.stderr)
            continue
        if len(hashes[task]) > 1:
            print(f"skipped {task}: split plans differ across encoders",
                  file=sys.stderr)
            continue
        valid = [i for i in range(len(next(iter(dists.values()))))
                 if all(v[i] is not None for v in dists.values())]
        if len(valid) < MIN_VALID_SPLITS:
            print(f"skipped {task}: only {len(valid)} splits valid in all "
                  f"encoders (need {MIN_VALID_SPLITS})", file=sys.stderr)
            continue
        per_task[task] = {e: [v[i] for i in valid] for e, v in dists.items()}
    if not per_task:
        print("error: no comparable tasks", file=sys.stderr)
        return EXIT_CONFIG
    cfg_hash = _config_hash({"cmd": "compare", "alpha": args.alpha,
                             "tasks": sorted(per_task)})
    report = compare_encoders(per_task, {t: kinds[t] for t in per_task},
                              alpha=args.alpha,
                              metadata={"config_hash": cfg_hash})
    write_report_files(report, args.out, header_comment=_stamp(cfg_hash, "-"))
    return EXIT_OK


def cmd_region_map(args) -> int:
    from .featstore import read_features
    from .preprocess import read_tile_grid_csv
    from .tileprobe import load_probe, region_map, write_region_map_csv

    probe = load_probe(args.probe)
    grid = read_tile_grid_csv(args.grid)
    features = read_features(args.features)
    rows = region_map(probe, grid, features)
    write_region_map_csv(rows, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthbench import SynthSpec, gen_mil_dataset

    spec = SynthSpec(kind=args.kind, seed=args.seed,
                     n_slides=args.n_slides,
                     permute_labels=args.permute_labels)
    ds = gen_mil_dataset(spec, args.out)
    config = f"""[run]
manifest = "{ds.manifest_path}"
feature_root = "{ds.feature_root}"
output_root = "{Path(args.out) / 'bench'}"
seed = {args.seed}
workers = 1
encoders = ["{ds.encoder_id}"]

[[task]]
task_id = "{ds.task_id}"
kind = "{'multiclass' if ds.kind == 'mil_multiclass' else 'binary' if ds.kind == 'mil_binary' else ds.kind}"
label_column = "{ds.label_column}"
n_classes = {ds.n_classes}
"""
    (Path(args.out) / "config.toml").write_text(config)
    print(f"wrote {ds.manifest_path} and {Path(args.out) / 'config.toml'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="milbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", help="tissue masks and tile grids from thumbnails")
    p.add_argument("--thumbnails", required=True)
    p.add_argument("--geometries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile-px", type=int, default=224)
    p.add_argument("--target-mpp", type=float, default=0.5)
    p.add_argument("--min-tissue-frac", type=float, default=0.25)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("mock-encode", help="deterministic mock features for grids")
    p.add_argument("--grids", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--encoder-id", default="")
    p.set_defaults(func=cmd_mock_encode)

    p = sub.add_parser("splits", help="build a 20-split MCCV plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task-id", required=True)
    p.add_argument("--kind", required=True,
                   choices=["binary", "multiclass", "regression", "tile_level"])
    p.add_argument("--label-column", required=True)
    p.add_argument("--cohort", default="")
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-patient-grouping", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("benchmark", help="run all (task, encoder) benchmarks")
    p.add_argument("--config", required=True)
    p.add_argument("--output-root", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("compare", help="statistical encoder comparison report")
    p.add_argument("--tables", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("region-map", help="per-tile class map from a probe")
    p.add_argument("--probe", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_region_map)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p.add_argument("--kind", default="mil_binary",
                   choices=["mil_binary", "mil_multiclass", "regression",
                            "tile_level"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-slides", type=int, default=100)
    p.add_argument("--permute-labels", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MilbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
