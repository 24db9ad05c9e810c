"""Acquisition strategies: SMI selection, pseudo-labeling, random, or none.

Every strategy consumes the same (pool, budget) interface so the training
loop and the comparisons stay identical; only how points are picked and
labeled differs. Pseudo-labeling deliberately has no per-class balancing,
which is exactly the failure mode the balanced SMI selection avoids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .episodes import Episode
from .net import ParamVector, forward_batch
from .select import (
    INNER,
    SelectedSubset,
    SelectionEntry,
    per_class_select,
    selection_kernel,
)
from .maximize import MaximizerKind
from .smi import FLMI, GCMI, SetFunctionKind

SUPERVISED = "supervised"
PSEUDO_LABEL = "pseudo_label"
RANDOM = "random"
SMI = "smi"


@dataclass(frozen=True)
class StrategyKind:
    variant: str
    confidence_threshold: float = 0.0  # pseudo-label only
    smi_kind: SetFunctionKind | None = None

    def __post_init__(self):
        if self.variant not in (SUPERVISED, PSEUDO_LABEL, RANDOM, SMI):
            raise ConfigError(f"unknown strategy '{self.variant}'")
        if not 0.0 <= self.confidence_threshold < 1.0:
            raise ConfigError(f"confidence threshold must be in [0, 1): {self.confidence_threshold}")
        if self.variant == SMI and self.smi_kind is None:
            raise ConfigError("smi strategy needs a set-function kind")

    @property
    def selects(self) -> bool:
        return self.variant != SUPERVISED


def parse_strategy(
    name: str, confidence_threshold: float = 0.0, gc_lambda: float = 1.0
) -> StrategyKind:
    """Config-file spelling -> StrategyKind. 'flmi'/'gcmi' pick the SMI variant."""
    name = name.lower()
    if name in (FLMI, GCMI):
        return StrategyKind(SMI, smi_kind=SetFunctionKind(name, gc_lambda))
    if name in (SUPERVISED, PSEUDO_LABEL, RANDOM):
        return StrategyKind(name, confidence_threshold=confidence_threshold)
    raise ConfigError(f"unknown strategy '{name}'")


def acquire(
    strategy: StrategyKind,
    params: ParamVector,
    episode: Episode,
    pool,
    total_budget: int,
    phase: str,
    seed: int,
    maximizer: MaximizerKind | None = None,
    origin: str = INNER,
    step: int = 0,
) -> SelectedSubset:
    """Pick up to ``total_budget`` points from ``pool`` (unlabeled indices)."""
    pool = np.unique(np.asarray(pool, dtype=np.int64).ravel())
    if strategy.variant == SUPERVISED or pool.size == 0 or total_budget == 0:
        return SelectedSubset(origin=origin, exhausted=pool.size == 0 and strategy.selects)

    if strategy.variant == SMI:
        if total_budget % episode.way:
            raise ConfigError(
                f"budget {total_budget} does not split over {episode.way} classes"
            )
        kernel = selection_kernel(params, episode, pool, phase)
        return per_class_select(
            kernel,
            np.arange(pool.size),
            total_budget // episode.way,
            strategy.smi_kind,
            maximizer if maximizer is not None else MaximizerKind("lazy"),
            origin=origin,
            step=step,
            rng_seed=seed,
        )

    probs = forward_batch(params, episode.unlabeled_x[pool])
    conf = probs.max(axis=1)
    labels = probs.argmax(axis=1)
    subset = SelectedSubset(origin=origin)
    if strategy.variant == PSEUDO_LABEL:
        keep = np.flatnonzero(conf >= strategy.confidence_threshold)
        # highest confidence first, ties broken by pool index
        order = keep[np.lexsort((pool[keep], -conf[keep]))][:total_budget]
    else:  # RANDOM
        rng = np.random.default_rng(seed)
        order = rng.choice(pool.size, size=min(total_budget, pool.size), replace=False)
    for k in order:
        subset.entries.append(
            SelectionEntry(int(pool[k]), int(labels[k]), float(conf[k]), step)
        )
    subset.exhausted = len(subset.entries) < total_budget
    return subset
