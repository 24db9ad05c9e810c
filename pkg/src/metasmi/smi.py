"""Facility-location / graph-cut set functions and their mutual-information forms.

Four variants over a similarity kernel S:

* ``fl``   (square kernel over a ground set V):  sum_i max_{j in A} S_ij
* ``gc``   (square symmetric kernel): sum_{i in A, j in V} S_ij - lam * sum_{i,j in A} S_ij
* ``flmi`` (query rows R x pool cols): sum_{i in R} max_{j in A} S_ij + sum_{j in A} max_{i in R} S_ij
* ``gcmi`` (query rows R x pool cols): 2 * sum_{j in A} sum_{i in R} S_ij

The max over an empty set is 0, so every variant is normalized: f(empty) = 0.
``GainState`` keeps per-row running maxima, a current per-column gain table,
and graph-cut partial sums, so pricing a candidate costs O(1) and a commit
only rescans the rows whose maximum actually moved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, LogicError
from .kernel import Kernel

FL = "fl"
GC = "gc"
FLMI = "flmi"
GCMI = "gcmi"

_VARIANTS = (FL, GC, FLMI, GCMI)


@dataclass(frozen=True)
class SetFunctionKind:
    """Which set function to evaluate; ``gc_lambda`` weighs the intra-set penalty."""

    variant: str
    gc_lambda: float = 1.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise InputError(f"unknown set function '{self.variant}', expected one of {_VARIANTS}")
        if self.variant == GC and not self.gc_lambda > 0:
            raise InputError(f"graph-cut penalty weight must be positive, got {self.gc_lambda}")

    @property
    def is_mutual_information(self) -> bool:
        return self.variant in (FLMI, GCMI)


def _check_indices(a: np.ndarray, n_cols: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64).ravel()
    if a.size != np.unique(a).size:
        raise InputError("selected set contains repeated indices")
    if a.size and (a.min() < 0 or a.max() >= n_cols):
        raise InputError(f"column index out of range [0, {n_cols})")
    return a


def _check_square(kernel: Kernel) -> None:
    if kernel.rows != kernel.cols:
        raise InputError(f"need a square kernel, got {kernel.rows}x{kernel.cols}")


def flmi_eval(a, kernel: Kernel) -> float:
    """Facility-location mutual information of column set ``a`` with the rows."""
    a = _check_indices(a, kernel.cols)
    if a.size == 0:
        return 0.0
    sub = kernel.values[:, a]
    return float(sub.max(axis=1).sum() + sub.max(axis=0).sum())


def gcmi_eval(a, kernel: Kernel) -> float:
    """Graph-cut mutual information: twice the row-column similarity mass."""
    a = _check_indices(a, kernel.cols)
    if a.size == 0:
        return 0.0
    return float(2.0 * kernel.values[:, a].sum())


def fl_eval(a, kernel: Kernel) -> float:
    """Facility location over a square kernel's ground set."""
    _check_square(kernel)
    a = _check_indices(a, kernel.cols)
    if a.size == 0:
        return 0.0
    return float(kernel.values[:, a].max(axis=1).sum())


def gc_eval(a, kernel: Kernel, gc_lambda: float = 1.0) -> float:
    """Graph cut with intra-set penalty weight ``gc_lambda``."""
    _check_square(kernel)
    if np.abs(kernel.values - kernel.values.T).max() > 1e-9:
        raise InputError("graph cut needs a symmetric kernel")
    a = _check_indices(a, kernel.cols)
    if a.size == 0:
        return 0.0
    cross = kernel.values[a, :].sum()
    intra = kernel.values[np.ix_(a, a)].sum()
    return float(cross - gc_lambda * intra)


def set_eval(kind: SetFunctionKind, a, kernel: Kernel) -> float:
    """From-scratch evaluation; the oracle that GainState must agree with."""
    if kind.variant == FLMI:
        return flmi_eval(a, kernel)
    if kind.variant == GCMI:
        return gcmi_eval(a, kernel)
    if kind.variant == FL:
        return fl_eval(a, kernel)
    return gc_eval(a, kernel, kind.gc_lambda)


class GainState:
    """Incremental evaluation state for one greedy maximization run.

    Single-owner mutable: one run owns one state. ``gains`` prices candidate
    columns against the current selection without touching it; ``commit``
    folds a column in and keeps ``current_value`` consistent with a fresh
    evaluation.
    """

    def __init__(self, kind: SetFunctionKind, kernel: Kernel):
        if kind.variant in (FL, GC):
            _check_square(kernel)
            if kind.variant == GC and np.abs(kernel.values - kernel.values.T).max() > 1e-9:
                raise InputError("graph cut needs a symmetric kernel")
        self.kind = kind
        self.kernel = kernel
        self.selected: list[int] = []
        self.current_value = 0.0
        self.eval_count = 0
        v = kernel.values
        self._in_selected = np.zeros(kernel.cols, dtype=bool)
        if kind.variant in (FLMI, FL):
            # the per-class kernels built from one-hot labels have identical
            # rows; collapsing them with a multiplicity weight computes the
            # exact same sums and maxima with one row of work
            if v.shape[0] > 1 and (v == v[0]).all():
                self._rows = v[:1]
                self._row_weight = float(v.shape[0])
            else:
                self._rows = v
                self._row_weight = 1.0
            self._unique_row_max = np.zeros(self._rows.shape[0])
            # facility-location part of every candidate's gain, kept current:
            # lift[j] = sum_i max(0, v[i, j] - per_row_max[i])
            self._lift = self._row_weight * self._rows.sum(axis=0)
        if kind.variant == FLMI:
            self._col_max = self._rows.max(axis=0)
        elif kind.variant == GCMI:
            self._col_score = 2.0 * v.sum(axis=0)
        elif kind.variant == GC:
            self._row_total = v.sum(axis=1)
            self._diag = np.diag(v).copy()
            self._sel_sim = np.zeros(kernel.cols)

    @property
    def per_row_max(self) -> np.ndarray:
        """Current max similarity to the selection, one entry per kernel row."""
        if self._rows.shape[0] == self.kernel.rows:
            return self._unique_row_max
        return np.repeat(self._unique_row_max, self.kernel.rows)

    def gains(self, candidates) -> np.ndarray:
        """Marginal gains of each candidate column w.r.t. the current selection."""
        cand = np.asarray(candidates, dtype=np.int64).ravel()
        if np.any(self._in_selected[cand]):
            raise LogicError("marginal gain requested for an already selected column")
        self.eval_count += cand.size
        kind = self.kind.variant
        if kind == FLMI:
            return self._lift[cand] + self._col_max[cand]
        if kind == GCMI:
            return self._col_score[cand]
        if kind == FL:
            return self._lift[cand]
        lam = self.kind.gc_lambda
        return self._row_total[cand] - lam * (self._diag[cand] + 2.0 * self._sel_sim[cand])

    def gain_vector(self) -> np.ndarray:
        """Current gains for every column as a fresh array, no bookkeeping.

        The vectorized maximizer masks out unavailable columns itself and
        accounts for evaluations; entries for already-selected columns are
        meaningless and must be masked by the caller.
        """
        kind = self.kind.variant
        if kind == FLMI:
            return self._lift + self._col_max
        if kind == GCMI:
            return self._col_score.copy()
        if kind == FL:
            return self._lift.copy()
        lam = self.kind.gc_lambda
        return self._row_total - lam * (self._diag + 2.0 * self._sel_sim)

    def gain(self, x: int) -> float:
        """Scalar fast path; same arithmetic as ``gains`` on one column."""
        x = int(x)
        if self._in_selected[x]:
            raise LogicError("marginal gain requested for an already selected column")
        self.eval_count += 1
        kind = self.kind.variant
        if kind == FLMI:
            return float(self._lift[x] + self._col_max[x])
        if kind == GCMI:
            return float(self._col_score[x])
        if kind == FL:
            return float(self._lift[x])
        lam = self.kind.gc_lambda
        return float(self._row_total[x] - lam * (self._diag[x] + 2.0 * self._sel_sim[x]))

    def commit(self, x: int) -> float:
        """Add column ``x``; returns its marginal gain at commit time."""
        x = int(x)
        if x < 0 or x >= self.kernel.cols:
            raise InputError(f"column index {x} out of range [0, {self.kernel.cols})")
        if self._in_selected[x]:
            raise LogicError(f"column {x} committed twice")
        g = self.gain(x)
        self.eval_count -= 1  # the commit-time evaluation is bookkeeping, not search
        kind = self.kind.variant
        if kind in (FLMI, FL):
            col = self._rows[:, x]
            raised = col > self._unique_row_max
            if raised.any():
                v = self._rows[raised]
                old = self._unique_row_max[raised]
                self._lift -= self._row_weight * np.maximum(v - old[:, None], 0.0).sum(axis=0)
                self._unique_row_max[raised] = col[raised]
                self._lift += self._row_weight * np.maximum(v - col[raised][:, None], 0.0).sum(axis=0)
        elif kind == GC:
            self._sel_sim += self.kernel.values[x, :]
        self._in_selected[x] = True
        self.selected.append(x)
        self.current_value += g
        return g


def marginal_gain(state: GainState, x: int) -> float:
    """Gain of adding ``x``; equals set_eval(selected + [x]) - set_eval(selected)."""
    return state.gain(x)


def commit(state: GainState, x: int) -> GainState:
    """Mutates ``state`` to include ``x`` and returns it."""
    state.commit(x)
    return state
