"""Class-probability embeddings and the cosine similarity kernel.

Every set function in this package is instantiated from one ``Kernel``:
rows are the labeled query-side points (one-hot embeddings), columns are
unlabeled pool points (softmax embeddings under the current model).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .net import ParamVector, forward_batch

SOFTMAX = "softmax"
ONEHOT = "onehot"


@dataclass(frozen=True)
class Embeddings:
    """A batch of C-dimensional probability vectors, one row per point."""

    vectors: np.ndarray
    kind: str

    def validate(self, atol: float = 1e-9) -> None:
        v = self.vectors
        if v.ndim != 2:
            raise InputError(f"embeddings must be 2-d, got shape {v.shape}")
        if np.any(v < -atol) or np.any(np.abs(v.sum(axis=1) - 1.0) > atol):
            raise InputError("embedding rows must lie on the probability simplex")
        if self.kind == ONEHOT and np.any(np.sum(v == 1.0, axis=1) != 1):
            raise InputError("one-hot embeddings need exactly one unit entry per row")


@dataclass
class Kernel:
    """Pairwise cosine similarities, query rows x pool columns.

    ``row_class`` labels each row with its class id; ``col_index`` maps each
    column back to its index in the originating unlabeled pool.
    """

    values: np.ndarray
    row_class: np.ndarray
    col_index: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.row_class = np.asarray(self.row_class, dtype=np.int64)
        self.col_index = np.asarray(self.col_index, dtype=np.int64)
        r, c = self.values.shape
        if self.row_class.shape != (r,) or self.col_index.shape != (c,):
            raise InputError(
                f"kernel metadata mismatch: values {self.values.shape}, "
                f"row_class {self.row_class.shape}, col_index {self.col_index.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InputError("kernel entries must be finite")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def row_slice(self, row_mask: np.ndarray) -> "Kernel":
        """Sub-kernel of the given rows, skipping re-validation of the values."""
        sub = object.__new__(Kernel)
        sub.values = self.values[row_mask]
        sub.row_class = self.row_class[row_mask]
        sub.col_index = self.col_index
        return sub


def prob_embed(params: ParamVector, points: np.ndarray) -> Embeddings:
    """Softmax class-probability embedding of each point under ``params``."""
    return Embeddings(forward_batch(params, points), SOFTMAX)


def onehot_embed(labels, n_classes: int) -> Embeddings:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InputError(f"label out of range [0, {n_classes}): {labels.min()}..{labels.max()}")
    vecs = np.zeros((labels.size, n_classes))
    vecs[np.arange(labels.size), labels] = 1.0
    return Embeddings(vecs, ONEHOT)


def cosine_kernel(
    row_embeds: Embeddings,
    col_embeds: Embeddings,
    row_class=None,
    col_index=None,
) -> Kernel:
    """Cosine similarity of every row embedding against every column embedding.

    Entries land in [0, 1] because probability vectors are non-negative; tiny
    floating-point overshoot is clipped away.
    """
    r, c = row_embeds.vectors, col_embeds.vectors
    if r.shape[1] != c.shape[1]:
        raise InputError(f"embedding widths differ: {r.shape[1]} vs {c.shape[1]}")
    rn = r if row_embeds.kind == ONEHOT else r / np.linalg.norm(r, axis=1, keepdims=True)
    cn = c if col_embeds.kind == ONEHOT else c / np.linalg.norm(c, axis=1, keepdims=True)
    values = rn @ cn.T
    np.clip(values, 0.0, 1.0, out=values)
    if row_class is None:
        row_class = np.zeros(r.shape[0], dtype=np.int64)
    if col_index is None:
        col_index = np.arange(c.shape[0], dtype=np.int64)
    return Kernel(values, row_class, col_index)


def write_kernel_csv(kernel: Kernel, path) -> None:
    """Header row carries the pool indices; each data row starts with its class."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_class"] + [str(i) for i in kernel.col_index])
        for cls, row in zip(kernel.row_class, kernel.values):
            w.writerow([str(cls)] + [repr(float(v)) for v in row])


def read_kernel_csv(path) -> Kernel:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}:1: empty kernel file") from None
        if not header or header[0] != "row_class":
            raise InputError(f"{path}:1: header must start with 'row_class'")
        try:
            col_index = np.array([int(v) for v in header[1:]], dtype=np.int64)
        except ValueError as exc:
            raise InputError(f"{path}:1: bad column index: {exc}") from exc
        rows, classes = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InputError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}"
                )
            try:
                classes.append(int(rec[0]))
                rows.append([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad value: {exc}") from exc
    if not rows:
        raise InputError(f"{path}:2: kernel file has no data rows")
    return Kernel(np.array(rows), np.array(classes), col_index)
