"""Gated-attention MIL aggregator with analytic gradients.

A bag of tile features is pooled by a tanh*sigmoid gated attention
(scores softmax-normalized over tiles) into one slide embedding, which a
linear head maps to class logits or a single regression output. The hot
per-bag kernels live in ``_kernels`` (compiled extension or numpy twin).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import FormatError, InvalidData, ShapeError
from .metrics import binary_auc, macro_ovr_auc
from .optim import OptimHyper, OptimState, adamw_step

_KINDS = {"classification": _kernels.KIND_CLASSIFICATION,
          "regression": _kernels.KIND_REGRESSION}

GMAP_MAGIC = b"GMAP"
GMAP_VERSION = 1


@dataclass
class Bag:
    features: np.ndarray  # (n, d) float64
    target: int | float

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ShapeError("bag needs at least one tile feature row")
        if not np.all(np.isfinite(self.features)):
            raise InvalidData("bag features contain NaN/Inf")


@dataclass
class GmaParams:
    V: np.ndarray       # (h, d) tanh branch
    U: np.ndarray       # (h, d) sigmoid gate
    w: np.ndarray       # (h,)   attention scorer
    W_head: np.ndarray  # (c, d)
    b_head: np.ndarray  # (c,)

    def __post_init__(self):
        for name in ("V", "U", "w", "W_head", "b_head"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
        h, d = self.V.shape
        if self.U.shape != (h, d) or self.w.shape != (h,):
            raise ShapeError("attention weight shapes are inconsistent")
        if self.W_head.ndim != 2 or self.W_head.shape[1] != d:
            raise ShapeError("head width does not match input dim")
        if self.b_head.shape != (self.W_head.shape[0],):
            raise ShapeError("head bias shape mismatch")

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def h(self) -> int:
        return self.V.shape[0]

    @property
    def c(self) -> int:
        return self.W_head.shape[0]

    @classmethod
    def init(cls, d: int, c: int, h: int, rng: np.random.Generator) -> "GmaParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        bd = 1.0 / np.sqrt(d)
        bh = 1.0 / np.sqrt(h)
        return cls(
            V=rng.uniform(-bd, bd, size=(h, d)),
            U=rng.uniform(-bd, bd, size=(h, d)),
            w=rng.uniform(-bh, bh, size=h),
            W_head=rng.uniform(-bd, bd, size=(c, d)),
            b_head=np.zeros(c),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"V": self.V, "U": self.U, "w": self.w,
                "W_head": self.W_head, "b_head": self.b_head}

    def copy(self) -> "GmaParams":
        return GmaParams(**{k: v.copy() for k, v in self.as_dict().items()})


class ForwardResult(NamedTuple):
    attention: np.ndarray  # (n,) nonnegative, sums to 1
    embedding: np.ndarray  # (d,)
    output: np.ndarray     # (c,)


def gma_forward(p: GmaParams, bag: Bag) -> ForwardResult:
    if bag.features.shape[1] != p.d:
        raise ShapeError(f"bag dim {bag.features.shape[1]} != params dim {p.d}")
    att, z, out = _kernels.gma_forward(p.V, p.U, p.w, p.W_head, p.b_head,
                                       bag.features)
    return ForwardResult(att, z, out)


def loss_and_grad(p: GmaParams, bag: Bag, task_kind: str) -> tuple[float, dict]:
    if task_kind not in _KINDS:
        raise ValueError(f"unknown task_kind {task_kind!r}")
    if bag.features.shape[1] != p.d:
        raise ShapeError(f"bag dim {bag.features.shape[1]} != params dim {p.d}")
    if task_kind == "classification":
        y = int(bag.target)
        if not 0 <= y < p.c:
            raise InvalidData(f"class target {y} out of range for c={p.c}")
    loss, _out, dV, dU, dw, dWh, dbh = _kernels.gma_value_and_grad(
        p.V, p.U, p.w, p.W_head, p.b_head, bag.features,
        bag.target, _KINDS[task_kind])
    return float(loss), {"V": dV, "U": dU, "w": dw, "W_head": dWh, "b_head": dbh}


@dataclass
class TrainConfig:
    epochs: int = 50
    hidden: int | None = None  # None: min(128, input dim)
    lr_peak: float = 1e-4
    weight_decay: float = 1e-5
    warmup_frac: float = 0.1
    lr_final: float = 0.0

    def hidden_for(self, d: int) -> int:
        return self.hidden if self.hidden is not None else min(128, d)


@dataclass
class TrainResult:
    params: GmaParams
    val_metric: float
    curve: list[tuple[int, float, float]]  # (epoch, train_loss, val_metric)


def _val_scores(params: GmaParams, val: Sequence[Bag]) -> np.ndarray:
    rows = np.empty((len(val), params.c))
    for i, bag in enumerate(val):
        out = gma_forward(params, bag).output
        e = np.exp(out - out.max())
        rows[i] = e / e.sum() if params.c > 1 else out
    return rows


def validation_metric(params: GmaParams, val: Sequence[Bag], task_kind: str) -> float:
    """AUC for classification, negative RMSE for regression (higher better)."""
    if task_kind == "regression":
        preds = np.array([gma_forward(params, b).output[0] for b in val])
        targets = np.array([float(b.target) for b in val])
        return -float(np.sqrt(np.mean((preds - targets) ** 2)))
    probs = _val_scores(params, val)
    labels = [int(b.target) for b in val]
    if params.c == 2:
        return binary_auc(probs[:, 1], labels)
    return macro_ovr_auc(probs, labels)


def train_slide_model(bags: Sequence[Bag], val: Sequence[Bag], task_kind: str,
                      seed: int, config: TrainConfig = TrainConfig(),
                      n_classes: int | None = None) -> TrainResult:
    """Train for a fixed number of epochs of single-bag updates.

    Shuffle order and parameter init are driven entirely by ``seed``, so a
    run is reproducible bit-for-bit. No early stopping: the final-epoch
    parameters and validation metric are returned.
    """
    if not bags or not val:
        raise InvalidData("train and validation sets must be nonempty")
    d = bags[0].features.shape[1]
    if task_kind == "classification":
        if n_classes is None:
            n_classes = max(int(b.target) for b in list(bags) + list(val)) + 1
        c = max(n_classes, 2)
    else:
        c = 1
    rng = np.random.Generator(np.random.PCG64(seed))
    params = GmaParams.init(d, c, config.hidden_for(d), rng)
    total = config.epochs * len(bags)
    hyper = OptimHyper(lr_peak=config.lr_peak, weight_decay=config.weight_decay,
                       warmup_steps=int(round(config.warmup_frac * total)),
                       total_steps=total, lr_final=config.lr_final)
    state = OptimState.for_params(params.as_dict(), hyper)
    pdict = params.as_dict()
    curve = []
    val_metric = float("nan")
    for epoch in range(config.epochs):
        order = rng.permutation(len(bags))
        epoch_loss = 0.0
        for i in order:
            loss, grads = loss_and_grad(params, bags[i], task_kind)
            adamw_step(state, pdict, grads)
            epoch_loss += loss
        val_metric = validation_metric(params, val, task_kind)
        curve.append((epoch, epoch_loss / len(bags), val_metric))
    return TrainResult(params=params, val_metric=val_metric, curve=curve)


def write_curve_csv(curve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_metric\n")
        for epoch, loss, metric in curve:
            fh.write(f"{epoch},{loss!r},{metric!r}\n")


def save_params(p: GmaParams, path: str | Path) -> None:
    """Binary sidecar: GMAP magic, version, (h, d, c), then the five tensors."""
    head = GMAP_MAGIC + struct.pack("<HHIII", GMAP_VERSION, 0, p.h, p.d, p.c)
    head += b"\x00" * ((-len(head)) % 64)
    with open(path, "wb") as fh:
        fh.write(head)
        for arr in (p.V, p.U, p.w, p.W_head, p.b_head):
            fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def load_params(path: str | Path) -> GmaParams:
    blob = Path(path).read_bytes()
    if blob[:4] != GMAP_MAGIC:
        raise FormatError(f"{path}: not a GMAP params file")
    version, _flags, h, d, c = struct.unpack_from("<HHIII", blob, 4)
    if version != GMAP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 64
    shapes = [("V", (h, d)), ("U", (h, d)), ("w", (h,)),
              ("W_head", (c, d)), ("b_head", (c,))]
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count,
                                     offset=off).reshape(shape).copy()
        off += count * 8
    return GmaParams(**arrays)
