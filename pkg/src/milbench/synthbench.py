"""Synthetic datasets that exercise the full pipeline at desk scale.

Negative bags are isotropic Gaussian noise; positive bags additionally
carry a small fraction of tiles offset by a fixed signal vector. The
signal is strong enough that the task is solvable, but rare enough that
attention pooling is required to solve it well.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .featstore import FeatureMatrix, FeatureStore
from .seeding import rng_from


@dataclass
class SynthSpec:
    kind: str = "mil_binary"  # mil_binary | mil_multiclass | regression | tile_level
    n_slides: int = 200
    tiles_per_slide: tuple[int, int] = (300, 400)
    dim: int = 16
    n_classes: int = 3        # for mil_multiclass / tile_level
    signal_fraction: float = 0.05
    noise_sigma: float = 1.0
    seed: int = 0
    encoder_id: str = "synth"
    signal_scale: float = 1.0  # multiplier on the 4*sigma signal norm
    permute_labels: bool = False

    def __post_init__(self):
        if not 0 < self.signal_fraction <= 1:
            raise ValueError("signal_fraction must be in (0, 1]")
        if self.kind not in ("mil_binary", "mil_multiclass", "regression",
                             "tile_level"):
            raise ValueError(f"unknown kind {self.kind!r}")


def signal_vectors(spec: SynthSpec) -> np.ndarray:
    """Per-class signal directions of norm 4*noise_sigma*signal_scale.

    Drawn once from the spec seed; class 0 (or the negative class) has no
    signal, so row k is the offset applied to class k's signal tiles.
    """
    k = spec.n_classes if spec.kind in ("mil_multiclass", "tile_level") else 2
    rng = rng_from("synth-signal", spec.seed, spec.dim, k)
    vecs = rng.normal(size=(k, spec.dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs * 4.0 * spec.noise_sigma * spec.signal_scale


@dataclass
class SynthDataset:
    manifest_path: Path
    feature_root: Path
    encoder_id: str
    task_id: str
    kind: str
    label_column: str = "label"
    n_classes: int = 2


def _slide_rows(spec: SynthSpec):
    """Deterministic per-slide assignment of size, class/target, patient."""
    rng = rng_from("synth-slides", spec.seed, spec.kind, spec.n_slides)
    lo, hi = spec.tiles_per_slide
    rows = []
    k = spec.n_classes if spec.kind in ("mil_multiclass", "tile_level") else 2
    for i in range(spec.n_slides):
        n_tiles = int(rng.integers(lo, hi + 1))
        if spec.kind == "regression":
            frac = float(rng.uniform(0.0, 2.0 * spec.signal_fraction))
            rows.append((f"slide{i:04d}", n_tiles, frac))
        else:
            rows.append((f"slide{i:04d}", n_tiles, i % k))
    return rows


def gen_bag(spec: SynthSpec, slide_id: str, n_tiles: int, label) -> np.ndarray:
    """Feature matrix for one slide; pure function of (spec, slide identity)."""
    rng = rng_from("synth-bag", spec.seed, slide_id)
    tiles = rng.normal(0.0, spec.noise_sigma,
                       size=(n_tiles, spec.dim))
    vecs = signal_vectors(spec)
    if spec.kind == "regression":
        n_signal = int(np.ceil(float(label) * n_tiles))
        direction = vecs[1]
    elif spec.kind == "tile_level":
        n_signal = n_tiles  # every tile carries its class signature
        direction = vecs[int(label)]
    else:
        if int(label) == 0:
            return tiles
        n_signal = int(np.ceil(spec.signal_fraction * n_tiles))
        direction = vecs[int(label)]
    if n_signal > 0:
        idx = rng.choice(n_tiles, size=min(n_signal, n_tiles), replace=False)
        tiles[idx] += direction
    return tiles


def gen_mil_dataset(spec: SynthSpec, out_dir: str | Path) -> SynthDataset:
    """Write a manifest CSV plus one feature file per slide.

    The regression target recorded in the manifest is the realized signal
    fraction ceil(f*n)/n, so a perfect model has zero error.
    """
    out_dir = Path(out_dir)
    feature_root = out_dir / "features"
    store = FeatureStore(feature_root)
    rows = _slide_rows(spec)
    labels = [r[2] for r in rows]
    if spec.permute_labels:
        perm_rng = rng_from("synth-permute", spec.seed)
        labels = [labels[i] for i in perm_rng.permutation(len(labels))]

    manifest_path = out_dir / "manifest.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slide_id", "patient_id", "cohort", "label"])
        for (slide_id, n_tiles, true_label), label in zip(rows, labels):
            if spec.kind == "regression":
                realized = np.ceil(float(label) * n_tiles) / n_tiles
                written = repr(float(realized))
            else:
                written = str(int(label))
            writer.writerow([slide_id, f"pt_{slide_id}", "synth", written])
            # features always follow the slide's true label; permuted
            # manifests therefore carry no signal (the control's point)
            data = gen_bag(spec, slide_id, n_tiles,
                           true_label).astype(np.float32)
            store.save(FeatureMatrix(slide_id=slide_id, encoder_id=spec.encoder_id,
                                     data=data))
    return SynthDataset(manifest_path=manifest_path, feature_root=feature_root,
                        encoder_id=spec.encoder_id,
                        task_id=f"synth_{spec.kind}", kind=spec.kind,
                        n_classes=spec.n_classes
                        if spec.kind in ("mil_multiclass", "tile_level") else 2)


def oracle_mean_probe_auc(spec: SynthSpec) -> float:
    """Closed-form linear probe: project slide-mean features onto the true
    signal direction and score AUC. Establishes the task is solvable."""
    from .metrics import binary_auc

    if spec.kind != "mil_binary":
        raise ValueError("oracle probe is defined for mil_binary specs")
    direction = signal_vectors(spec)[1]
    direction = direction / np.linalg.norm(direction)
    scores, labels = [], []
    for slide_id, n_tiles, label in _slide_rows(spec):
        mean = gen_bag(spec, slide_id, n_tiles, label).mean(axis=0)
        scores.append(float(mean @ direction))
        labels.append(int(label))
    return binary_auc(scores, labels)
