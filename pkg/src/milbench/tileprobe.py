"""Multinomial logistic-regression probe over individual tile features,
bypassing attention pooling, for coarse-segmentation style tasks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (InfeasibleTask, InvalidData, NumericalError,
                     ShapeError, UndefinedMetric)
from .gma import TrainConfig
from .metrics import macro_ovr_auc
from .optim import OptimHyper, OptimState, adamw_step

PROBE_BATCH = 64


@dataclass
class ProbeParams:
    W: np.ndarray  # (k, d)
    b: np.ndarray  # (k,)

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] < 2:
            raise ShapeError("probe needs k >= 2 classes")
        if self.b.shape != (self.W.shape[0],):
            raise ShapeError("bias shape mismatch")

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def probe_loss_and_grad(params: ProbeParams, X: np.ndarray,
                        y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy over a tile batch with exact gradients."""
    if X.shape[1] != params.d:
        raise ShapeError("tile dim does not match probe")
    logits = X @ params.W.T + params.b
    probs = softmax_rows(logits)
    n = len(y)
    loss = float(-np.mean(np.log(probs[np.arange(n), y])))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, {"W": delta.T @ X, "b": delta.sum(axis=0)}


@dataclass
class ProbeResult:
    params: ProbeParams
    val_macro_auc: float


def probe_train(train_X: np.ndarray, train_y: Sequence[int],
                val_X: np.ndarray, val_y: Sequence[int], seed: int,
                config: TrainConfig = TrainConfig(),
                n_classes: int | None = None) -> ProbeResult:
    """Minibatch AdamW with the same warmup-cosine contract as the slide
    models; no class rebalancing. Weights start at zero (convex problem),
    so the initial loss is exactly ln(k)."""
    train_X = np.asarray(train_X, dtype=np.float64)
    val_X = np.asarray(val_X, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    if not np.all(np.isfinite(train_X)) or not np.all(np.isfinite(val_X)):
        raise InvalidData("tile features contain NaN/Inf")
    k = n_classes if n_classes is not None else int(max(train_y.max(), val_y.max())) + 1
    present = set(np.unique(train_y).tolist())
    if present != set(range(k)):
        raise InfeasibleTask(f"train tiles missing classes {sorted(set(range(k)) - present)}")
    d = train_X.shape[1]
    params = ProbeParams(W=np.zeros((k, d)), b=np.zeros(k))
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(train_y)
    steps_per_epoch = max(1, -(-n // PROBE_BATCH))
    total = config.epochs * steps_per_epoch
    hyper = OptimHyper(lr_peak=config.lr_peak, weight_decay=config.weight_decay,
                       warmup_steps=int(round(config.warmup_frac * total)),
                       total_steps=total, lr_final=config.lr_final)
    pdict = {"W": params.W, "b": params.b}
    state = OptimState.for_params(pdict, hyper)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, PROBE_BATCH):
            batch = order[start:start + PROBE_BATCH]
            _, grads = probe_loss_and_grad(params, train_X[batch], train_y[batch])
            adamw_step(state, pdict, grads)
    probs = softmax_rows(val_X @ params.W.T + params.b)
    return ProbeResult(params=params,
                       val_macro_auc=macro_ovr_auc(probs, val_y))


def region_map(params: ProbeParams, grid, features) -> list[dict]:
    """Per-tile argmax class and probability, joinable on (x, y).

    Logit ties break to the lowest class index (argmax convention).
    """
    if features.rows != len(grid.tiles):
        raise ShapeError("feature rows do not align with the tile grid")
    if features.rows and features.dim != params.d:
        raise ShapeError("feature dim does not match probe")
    out = []
    if features.rows:
        probs = softmax_rows(features.data.astype(np.float64) @ params.W.T
                             + params.b)
        classes = np.argmax(probs, axis=1)
        for (x, y), cls_ix, p in zip(grid.tiles, classes, probs):
            out.append({"slide_id": grid.slide_id, "x": x, "y": y,
                        "pred_class": int(cls_ix), "prob": float(p[cls_ix])})
    return out


def write_region_map_csv(rows: list[dict], path: str | Path,
                         header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["slide_id", "x", "y", "pred_class", "prob"])
        for r in rows:
            writer.writerow([r["slide_id"], r["x"], r["y"], r["pred_class"],
                             repr(r["prob"])])


PROBE_MAGIC = b"PRBP"


def save_probe(params: ProbeParams, path: str | Path) -> None:
    import struct

    head = PROBE_MAGIC + struct.pack("<HHII", 1, 0, params.k, params.d)
    head += b"\x00" * ((-len(head)) % 64)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(params.W.astype("<f8").tobytes(order="C"))
        fh.write(params.b.astype("<f8").tobytes(order="C"))


def load_probe(path: str | Path) -> ProbeParams:
    import struct

    from .errors import FormatError

    blob = Path(path).read_bytes()
    if blob[:4] != PROBE_MAGIC:
        raise FormatError(f"{path}: not a probe params file")
    _ver, _flags, k, d = struct.unpack_from("<HHII", blob, 4)
    W = np.frombuffer(blob, dtype="<f8", count=k * d, offset=64).reshape(k, d)
    b = np.frombuffer(blob, dtype="<f8", count=k, offset=64 + k * d * 8)
    return ProbeParams(W=W.copy(), b=b.copy())


def run_tile_benchmark(task, plan, encoder_id, store, manifest,
                       config: TrainConfig = TrainConfig(),
                       existing=None):
    """Tile-level analogue of the slide benchmark: splits group tiles by
    source slide; every tile inherits its slide's class label."""
    from .mccv import (MetricTable, N_SPLITS, RUNS_PER_SPLIT, RunRecord,
                       class_mapping)
    from .seeding import derive_seed

    eligible = manifest.eligible(task)
    mapping = class_mapping(eligible, task.label_column)
    labels = {r.slide_id: mapping[r.labels[task.label_column]] for r in eligible}
    cache: dict[str, np.ndarray] = {}

    def stacked(slide_ids):
        xs, ys = [], []
        for sid in slide_ids:
            if sid not in cache:
                cache[sid] = store.load(encoder_id, sid).data.astype(np.float64)
            xs.append(cache[sid])
            ys.append(np.full(len(cache[sid]), labels[sid], dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    done = {(r.split, r.run): r for r in (existing or []) if r.status == "ok"}
    records = list(done.values())
    for s in range(N_SPLITS):
        split = plan.splits[s]
        for run_ix in range(RUNS_PER_SPLIT):
            if (s, run_ix) in done:
                continue
            seed = derive_seed("run", task.task_id, plan.seed, s, run_ix)
            try:
                train_X, train_y = stacked(split["train_ids"])
                val_X, val_y = stacked(split["val_ids"])
                result = probe_train(train_X, train_y, val_X, val_y, seed,
                                     config, n_classes=len(mapping))
                records.append(RunRecord(split=s, run=run_ix, seed=seed,
                                         metric=result.val_macro_auc,
                                         status="ok"))
            except (InfeasibleTask, InvalidData, UndefinedMetric,
                    NumericalError) as exc:
                records.append(RunRecord(split=s, run=run_ix, seed=seed,
                                         metric=None,
                                         status=f"failed:{type(exc).__name__}:{exc}"))
    records.sort(key=lambda r: (r.split, r.run))
    return MetricTable(task_id=task.task_id, encoder_id=encoder_id,
                       metric_kind="auc", plan_hash=plan.plan_hash,
                       runs=records)
