"""Cardinality-constrained greedy maximizers over a GainState.

All three variants share one tie-break rule (lowest column index) so that
naive and lazy runs are byte-identical and stochastic runs degenerate to
naive when the sample covers the pool. ``brute_force_max`` is the
enumeration oracle used by the tests.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError, SizeError
from .kernel import Kernel
from .smi import GainState, SetFunctionKind, set_eval

NAIVE = "naive"
LAZY = "lazy"
STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class MaximizerKind:
    variant: str
    epsilon: float = 0.1

    def __post_init__(self):
        if self.variant not in (NAIVE, LAZY, STOCHASTIC):
            raise InputError(f"unknown maximizer '{self.variant}'")
        if self.variant == STOCHASTIC and not 0.0 < self.epsilon < 1.0:
            raise InputError(f"stochastic greedy needs 0 < epsilon < 1, got {self.epsilon}")


@dataclass
class GreedyResult:
    selected: list[int]
    gains: list[float]
    final_value: float
    eval_count: int


def _pool_array(pool, n_cols: int) -> np.ndarray:
    pool = np.unique(np.asarray(pool, dtype=np.int64).ravel())
    if pool.size and (pool[0] < 0 or pool[-1] >= n_cols):
        raise InputError(f"pool index out of kernel column range [0, {n_cols})")
    return pool


def naive_greedy(state: GainState, pool, budget: int) -> GreedyResult:
    """Re-scores every remaining candidate each step; ties go to the lowest index."""
    pool = np.asarray(pool, dtype=np.int64).ravel()
    if pool.size and (pool.min() < 0 or pool.max() >= state.kernel.cols):
        raise InputError(f"pool index out of kernel column range [0, {state.kernel.cols})")
    start = len(state.selected)
    gains = []
    blocked = np.ones(state.kernel.cols, dtype=bool)
    blocked[pool] = False
    n_avail = state.kernel.cols - int(blocked.sum())
    for _ in range(min(int(budget), n_avail)):
        g = state.gain_vector()
        g[blocked] = -np.inf
        k = int(np.argmax(g))  # first max: lowest index among ties
        state.eval_count += n_avail
        state.commit(k)
        gains.append(float(g[k]))
        blocked[k] = True
        n_avail -= 1
    return GreedyResult(state.selected[start:], gains, state.current_value, state.eval_count)


def lazy_greedy(state: GainState, pool, budget: int) -> GreedyResult:
    """Priority queue of possibly stale gains, re-priced until the top is current.

    Heap entries are (-gain, column, selection size at pricing time); an entry
    is fresh when its size stamp matches the current selection, which under
    submodularity reproduces the naive sequence exactly.
    """
    pool = _pool_array(pool, state.kernel.cols)
    start = len(state.selected)
    budget = min(int(budget), pool.size)
    gains = []
    if budget > 0:
        initial = state.gains(pool)
        heap = [(-g, int(c), start) for g, c in zip(initial, pool)]
        heapq.heapify(heap)
        while len(gains) < budget:
            neg_g, col, stamp = heapq.heappop(heap)
            if stamp == len(state.selected):
                state.commit(col)
                gains.append(-neg_g)
            else:
                heapq.heappush(heap, (-state.gain(col), col, len(state.selected)))
    return GreedyResult(state.selected[start:], gains, state.current_value, state.eval_count)


def stochastic_greedy(
    state: GainState, pool, budget: int, epsilon: float, rng_seed: int
) -> GreedyResult:
    """Per step, scores ceil((|pool|/budget) * ln(1/eps)) random candidates."""
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"stochastic greedy needs 0 < epsilon < 1, got {epsilon}")
    pool = _pool_array(pool, state.kernel.cols)
    start = len(state.selected)
    budget = min(int(budget), pool.size)
    rng = np.random.default_rng(rng_seed)
    sample_size = math.ceil(pool.size / max(budget, 1) * math.log(1.0 / epsilon))
    gains = []
    mask = np.ones(pool.size, dtype=bool)
    for _ in range(budget):
        remaining = pool[mask]
        if sample_size >= remaining.size:
            cand = remaining
        else:
            cand = np.sort(rng.choice(remaining, size=sample_size, replace=False))
        g = state.gains(cand)
        k = int(np.argmax(g))
        state.commit(cand[k])
        gains.append(float(g[k]))
        mask[np.searchsorted(pool, cand[k])] = False
    return GreedyResult(state.selected[start:], gains, state.current_value, state.eval_count)


def run_maximizer(
    kind: MaximizerKind,
    fn_kind: SetFunctionKind,
    kernel: Kernel,
    pool,
    budget: int,
    rng_seed: int = 0,
) -> GreedyResult:
    """Fresh GainState plus the requested greedy variant in one call."""
    state = GainState(fn_kind, kernel)
    if kind.variant == NAIVE:
        return naive_greedy(state, pool, budget)
    if kind.variant == LAZY:
        return lazy_greedy(state, pool, budget)
    return stochastic_greedy(state, pool, budget, kind.epsilon, rng_seed)


def brute_force_max(
    kind: SetFunctionKind, kernel: Kernel, pool, budget: int, limit: int = 10**6
):
    """Exact optimum over all subsets of size <= budget, by enumeration."""
    pool = _pool_array(pool, kernel.cols)
    budget = min(int(budget), pool.size)
    total = sum(math.comb(pool.size, k) for k in range(budget + 1))
    if total > limit:
        raise SizeError(
            f"refusing to enumerate {total} subsets (> {limit}); shrink pool or budget"
        )
    best_set, best_value = [], 0.0
    for k in range(1, budget + 1):
        for subset in combinations(pool.tolist(), k):
            value = set_eval(kind, list(subset), kernel)
            if value > best_value:
                best_set, best_value = list(subset), value
    return best_set, best_value
