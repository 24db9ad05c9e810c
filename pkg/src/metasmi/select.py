"""Per-class SMI selection with hypothesized labels, for both loops.

For each class c (ascending), the set function is instantiated on the
sub-kernel of query rows belonging to c and maximized over the shared pool
with the per-class budget; winners take hypothesized label c and leave the
pool before later classes run. This sequential exclusion is what guarantees
exactly balanced per-class counts whenever the pool is large enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .episodes import Episode
from .kernel import Kernel, cosine_kernel, onehot_embed, prob_embed
from .maximize import MaximizerKind, run_maximizer
from .net import ParamVector
from .smi import SetFunctionKind

META_TRAIN = "meta_train"
META_TEST = "meta_test"
INNER = "inner"
OUTER = "outer"


@dataclass(frozen=True)
class Budget:
    """Total inner/outer selection sizes, split evenly over the task's classes."""

    b_in: int
    b_out: int
    way: int

    def __post_init__(self):
        if self.way < 1 or self.b_in < 0 or self.b_out < 0:
            raise ConfigError(f"invalid budget {self}")
        if self.b_in % self.way or self.b_out % self.way:
            raise ConfigError(
                f"budgets must split evenly over {self.way} classes: "
                f"b_in={self.b_in}, b_out={self.b_out}"
            )

    @property
    def per_class_in(self) -> int:
        return self.b_in // self.way

    @property
    def per_class_out(self) -> int:
        return self.b_out // self.way


@dataclass(frozen=True)
class SelectionEntry:
    pool_index: int  # index into the episode's unlabeled set
    label: int  # hypothesized class
    gain: float  # marginal gain (or confidence) at selection time
    step: int  # inner step that produced it; 0 for outer


@dataclass
class SelectedSubset:
    entries: list[SelectionEntry] = field(default_factory=list)
    origin: str = INNER
    exhausted: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def indices(self) -> np.ndarray:
        return np.array([e.pool_index for e in self.entries], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def label_counts(self, way: int) -> np.ndarray:
        return np.bincount(self.labels(), minlength=way) if self.entries else np.zeros(way, int)

    def extend(self, other: "SelectedSubset") -> None:
        self.entries.extend(other.entries)
        self.exhausted = self.exhausted or other.exhausted


@dataclass(frozen=True)
class SelectionAccuracy:
    label_match: float
    in_dist: float
    empty: bool = False


def per_class_select(
    kernel: Kernel,
    pool,
    budget_per_class: int,
    kind: SetFunctionKind,
    maximizer: MaximizerKind,
    origin: str = INNER,
    step: int = 0,
    rng_seed: int = 0,
) -> SelectedSubset:
    """One SMI maximization per row class, sharing and shrinking one pool.

    ``pool`` holds kernel column positions; returned entries carry the
    original pool indices via ``kernel.col_index``.
    """
    pool = np.unique(np.asarray(pool, dtype=np.int64).ravel())
    if pool.size and (pool[0] < 0 or pool[-1] >= kernel.cols):
        raise InputError(f"pool index out of kernel column range [0, {kernel.cols})")
    classes = np.unique(kernel.row_class)
    subset = SelectedSubset(origin=origin)
    available = np.zeros(kernel.cols, dtype=bool)
    available[pool] = True
    remaining = pool.size
    grouped = bool(np.all(np.diff(kernel.row_class) >= 0))
    for c in classes:
        if remaining < budget_per_class:
            subset.exhausted = True
        if remaining == 0:
            continue
        if grouped:  # contiguous row block: slice is a view, not a copy
            lo, hi = np.searchsorted(kernel.row_class, [c, c + 1])
            sub = kernel.row_slice(slice(lo, hi))
        else:
            sub = kernel.row_slice(kernel.row_class == c)
        result = run_maximizer(
            maximizer, kind, sub, np.flatnonzero(available), budget_per_class,
            rng_seed=(int(rng_seed) * 1000003 + int(c)) & 0x7FFFFFFF,
        )
        for col, gain in zip(result.selected, result.gains):
            subset.entries.append(
                SelectionEntry(int(kernel.col_index[col]), int(c), float(gain), step)
            )
            available[col] = False
        remaining -= len(result.selected)
    return subset


def selection_kernel(
    params: ParamVector, episode: Episode, pool, phase: str
) -> Kernel:
    """Rows: one-hot labels of S (and Q at meta-train); columns: softmax
    embeddings of the pool's unlabeled points under the current parameters."""
    pool = np.asarray(pool, dtype=np.int64)
    if phase == META_TRAIN:
        row_labels = np.concatenate([episode.support_y, episode.query_y])
    elif phase == META_TEST:
        row_labels = episode.support_y
    else:
        raise InputError(f"unknown phase '{phase}'")
    row_labels = np.sort(row_labels)  # grouped rows let per-class slices be views
    rows = onehot_embed(row_labels, episode.way)
    cols = prob_embed(params, episode.unlabeled_x[pool])
    return cosine_kernel(rows, cols, row_class=row_labels, col_index=pool)


def remaining_pool(episode: Episode, already: SelectedSubset | None) -> np.ndarray:
    """Unlabeled indices not yet selected, in ascending order."""
    keep = np.ones(episode.n_unlabeled, dtype=bool)
    if already is not None and already.entries:
        keep[already.indices()] = False
    return np.flatnonzero(keep)


def inner_select(
    params: ParamVector,
    episode: Episode,
    already: SelectedSubset | None,
    budget: Budget,
    kind: SetFunctionKind,
    maximizer: MaximizerKind,
    phase: str,
    step: int = 1,
    rng_seed: int = 0,
) -> SelectedSubset:
    """Fresh per-class selection for one inner step, excluding prior picks."""
    pool = remaining_pool(episode, already)
    if pool.size == 0:
        return SelectedSubset(origin=INNER, exhausted=True)
    kernel = selection_kernel(params, episode, pool, phase)
    return per_class_select(
        kernel, np.arange(pool.size), budget.per_class_in, kind, maximizer,
        origin=INNER, step=step, rng_seed=rng_seed,
    )


def outer_select(
    params: ParamVector,
    episode: Episode,
    inner_selected: SelectedSubset | None,
    budget: Budget,
    kind: SetFunctionKind,
    maximizer: MaximizerKind,
    rng_seed: int = 0,
) -> SelectedSubset:
    """Per-class selection for the outer loss, from the pool the inner loop left."""
    pool = remaining_pool(episode, inner_selected)
    if pool.size == 0:
        return SelectedSubset(origin=OUTER, exhausted=True)
    kernel = selection_kernel(params, episode, pool, META_TRAIN)
    return per_class_select(
        kernel, np.arange(pool.size), budget.per_class_out, kind, maximizer,
        origin=OUTER, step=0, rng_seed=rng_seed,
    )


def selection_accuracy(subset: SelectedSubset, episode: Episode) -> SelectionAccuracy:
    """How often hypothesized labels hit the hidden truth, and how often the
    picks are in-distribution at all. Distractor picks count as label misses."""
    if not subset.entries:
        return SelectionAccuracy(0.0, 0.0, empty=True)
    idx = subset.indices()
    hyp = subset.labels()
    true = episode.unlabeled_y[idx]
    return SelectionAccuracy(
        label_match=float(np.mean(hyp == true)),
        in_dist=float(np.mean(~episode.unlabeled_is_ood[idx])),
    )
