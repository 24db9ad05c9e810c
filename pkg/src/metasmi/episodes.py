"""Synthetic Gaussian-blob dataset and M-way K-shot episode sampling.

Class prototypes sit on the unit hypersphere; points are prototype plus
isotropic noise. Classes are split across train/val/test before anything is
sampled, and each class is split into a labeled and an unlabeled portion by
the labeled ratio, so support/query sets only ever see labeled points and
the unlabeled pool only ever sees unlabeled ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, SamplingError

TRAIN, VAL, TEST = "train", "val", "test"


@dataclass
class SyntheticDataset:
    features: np.ndarray  # (classes * per_class, dim), class c owns a contiguous block
    labels: np.ndarray  # (n,) global class id
    class_split: np.ndarray  # (classes,) one of train/val/test
    labeled_mask: np.ndarray  # (n,) bool
    rho: float
    classes: int
    dim: int
    per_class: int
    spread: float
    seed: int

    def class_rows(self, c: int) -> np.ndarray:
        return np.arange(c * self.per_class, (c + 1) * self.per_class)

    def split_classes(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.class_split == split)


@dataclass(frozen=True)
class EpisodeShape:
    way: int
    shot: int
    query_per_class: int
    unlabeled_per_class: int
    ood_classes: int = 0

    def __post_init__(self):
        if min(self.way, self.shot, self.query_per_class, self.unlabeled_per_class) < 1:
            raise ConfigError(f"episode shape must be positive: {self}")
        if self.ood_classes < 0:
            raise ConfigError("ood_classes must be >= 0")


@dataclass
class Episode:
    """One few-shot task. Unlabeled truth stays hidden from the learner and is
    only read by selection-accuracy diagnostics."""

    support_x: np.ndarray
    support_y: np.ndarray  # episode-local labels in [0, way)
    query_x: np.ndarray
    query_y: np.ndarray
    unlabeled_x: np.ndarray
    unlabeled_y: np.ndarray  # episode-local true label, -1 for distractors
    unlabeled_is_ood: np.ndarray
    way: int
    shot: int
    ood_classes: int
    episode_classes: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    support_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    query_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    unlabeled_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled_x.shape[0]


def _default_class_counts(classes: int) -> tuple[int, int, int]:
    # 64/16/20 percent, each split non-empty
    n_train = max(1, round(0.64 * classes))
    n_val = max(1, round(0.16 * classes))
    n_test = classes - n_train - n_val
    if n_test < 1:
        raise ConfigError(f"{classes} classes cannot cover train/val/test")
    return n_train, n_val, n_test


def gen_synthetic(
    seed: int,
    classes: int,
    dim: int,
    per_class: int,
    spread: float,
    class_counts: tuple[int, int, int] | None = None,
) -> SyntheticDataset:
    """Unit-sphere prototypes plus Gaussian noise of std ``spread``."""
    if classes < 2 or dim < 1 or per_class < 2:
        raise ConfigError(f"infeasible dataset size: classes={classes} dim={dim} per_class={per_class}")
    if not spread > 0:
        raise ConfigError(f"spread must be positive, got {spread}")
    counts = class_counts if class_counts is not None else _default_class_counts(classes)
    if len(counts) != 3 or any(c < 1 for c in counts) or sum(counts) != classes:
        raise ConfigError(f"class_counts {counts} must be three positive ints summing to {classes}")

    rng = np.random.default_rng(seed)
    protos = rng.normal(size=(classes, dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    noise = rng.normal(0.0, spread, size=(classes, per_class, dim))
    features = (protos[:, None, :] + noise).reshape(classes * per_class, dim)
    labels = np.repeat(np.arange(classes), per_class)
    split = np.array([TRAIN] * counts[0] + [VAL] * counts[1] + [TEST] * counts[2])
    return SyntheticDataset(
        features=features,
        labels=labels,
        class_split=split,
        labeled_mask=np.ones(classes * per_class, dtype=bool),
        rho=1.0,
        classes=classes,
        dim=dim,
        per_class=per_class,
        spread=spread,
        seed=seed,
    )


def split_labeled(dataset: SyntheticDataset, rho: float, seed: int) -> SyntheticDataset:
    """Mark ceil(rho * per_class) points per class as labeled (at least one)."""
    if not 0.0 < rho <= 1.0:
        raise InputError(f"labeled ratio must be in (0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    mask = np.zeros(dataset.labels.size, dtype=bool)
    n_lab = max(1, int(np.ceil(rho * dataset.per_class)))
    for c in range(dataset.classes):
        rows = dataset.class_rows(c)
        mask[rng.permutation(rows)[:n_lab]] = True
    out = SyntheticDataset(**{**dataset.__dict__})
    out.labeled_mask = mask
    out.rho = rho
    return out


def sample_episode(
    dataset: SyntheticDataset,
    split: str,
    shape: EpisodeShape,
    seed: int,
) -> Episode:
    """Draw an episode: M labeled classes for S/Q, their unlabeled points plus
    distractor-class unlabeled points for U, all disjoint by construction."""
    rng = np.random.default_rng(seed)
    candidates = dataset.split_classes(split)
    need = shape.way + shape.ood_classes
    if candidates.size < need:
        raise SamplingError(
            f"split '{split}' has {candidates.size} classes, episode needs {need}"
        )
    chosen = rng.choice(candidates, size=need, replace=False)
    in_dist, distractors = chosen[: shape.way], chosen[shape.way :]

    sup_idx, sup_y, qry_idx, qry_y = [], [], [], []
    unl_idx, unl_y = [], []
    for local, c in enumerate(in_dist):
        rows = dataset.class_rows(c)
        labeled = rows[dataset.labeled_mask[rows]]
        unlabeled = rows[~dataset.labeled_mask[rows]]
        if labeled.size < shape.shot + shape.query_per_class:
            raise SamplingError(
                f"class {c}: need {shape.shot + shape.query_per_class} labeled points, "
                f"have {labeled.size}"
            )
        if unlabeled.size < shape.unlabeled_per_class:
            raise SamplingError(
                f"class {c}: need {shape.unlabeled_per_class} unlabeled points, "
                f"have {unlabeled.size}"
            )
        pick = rng.choice(labeled, size=shape.shot + shape.query_per_class, replace=False)
        sup_idx.extend(pick[: shape.shot])
        sup_y.extend([local] * shape.shot)
        qry_idx.extend(pick[shape.shot :])
        qry_y.extend([local] * shape.query_per_class)
        upick = rng.choice(unlabeled, size=shape.unlabeled_per_class, replace=False)
        unl_idx.extend(upick)
        unl_y.extend([local] * shape.unlabeled_per_class)
    for c in distractors:
        rows = dataset.class_rows(c)
        unlabeled = rows[~dataset.labeled_mask[rows]]
        if unlabeled.size < shape.unlabeled_per_class:
            raise SamplingError(
                f"distractor class {c}: need {shape.unlabeled_per_class} unlabeled points, "
                f"have {unlabeled.size}"
            )
        upick = rng.choice(unlabeled, size=shape.unlabeled_per_class, replace=False)
        unl_idx.extend(upick)
        unl_y.extend([-1] * shape.unlabeled_per_class)

    unl_idx = np.asarray(unl_idx, dtype=np.int64)
    unl_y = np.asarray(unl_y, dtype=np.int64)
    order = rng.permutation(unl_idx.size)
    unl_idx, unl_y = unl_idx[order], unl_y[order]
    sup_idx = np.asarray(sup_idx, dtype=np.int64)
    qry_idx = np.asarray(qry_idx, dtype=np.int64)

    return Episode(
        support_x=dataset.features[sup_idx],
        support_y=np.asarray(sup_y, dtype=np.int64),
        query_x=dataset.features[qry_idx],
        query_y=np.asarray(qry_y, dtype=np.int64),
        unlabeled_x=dataset.features[unl_idx],
        unlabeled_y=unl_y,
        unlabeled_is_ood=unl_y < 0,
        way=shape.way,
        shot=shape.shot,
        ood_classes=shape.ood_classes,
        episode_classes=np.asarray(in_dist, dtype=np.int64),
        support_idx=sup_idx,
        query_idx=qry_idx,
        unlabeled_idx=unl_idx,
    )


def save_dataset(dataset: SyntheticDataset, path) -> None:
    """CSV with one point per row; floats written with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["point_id", "class_id", "split", "labeled"]
            + [f"f{i}" for i in range(dataset.dim)]
        )
        for i in range(dataset.labels.size):
            c = int(dataset.labels[i])
            w.writerow(
                [i, c, dataset.class_split[c], int(dataset.labeled_mask[i])]
                + [repr(float(v)) for v in dataset.features[i]]
            )


def load_dataset(path, rho: float, spread: float = float("nan"), seed: int = -1) -> SyntheticDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}:1: empty dataset file") from None
        if header[:4] != ["point_id", "class_id", "split", "labeled"]:
            raise InputError(f"{path}:1: unexpected dataset header {header[:4]}")
        dim = len(header) - 4
        labels, splits, mask, feats = [], {}, [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                c = int(rec[1])
                labels.append(c)
                splits[c] = rec[2]
                mask.append(bool(int(rec[3])))
                feats.append([float(v) for v in rec[4:]])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad value: {exc}") from exc
    if not labels:
        raise InputError(f"{path}:2: dataset file has no data rows")
    labels = np.asarray(labels, dtype=np.int64)
    classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=classes)
    if counts.min() != counts.max():
        raise InputError(f"{path}: classes have unequal sizes {counts.min()}..{counts.max()}")
    if np.any(labels != np.repeat(np.arange(classes), counts[0])):
        raise InputError(f"{path}: rows must be grouped by class in ascending order")
    return SyntheticDataset(
        features=np.asarray(feats),
        labels=labels,
        class_split=np.array([splits[c] for c in range(classes)]),
        labeled_mask=np.asarray(mask, dtype=bool),
        rho=rho,
        classes=classes,
        dim=dim,
        per_class=int(counts[0]),
        spread=spread,
        seed=seed,
    )
