"""First-order MAML training loop with semi-supervision in both loops.

The inner loop adapts task parameters on the support set plus an
accumulating pseudo-labeled subset, the outer loop updates the shared
initialization from query-set loss plus a second selected subset. Both
pseudo-label loss terms ramp in via exponential warm-up schedules. All
updates are strictly first order: the outer gradient is evaluated at the
adapted parameters and applied to the initialization directly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .episodes import (
    Episode,
    EpisodeShape,
    SyntheticDataset,
    TRAIN,
    VAL,
    sample_episode,
)
from .errors import ConfigError, LogicError
from .maximize import MaximizerKind
from .net import LossBreakdown, ParamVector, forward_batch, init_params, loss_and_grad, sgd_step
from .select import (
    INNER,
    META_TEST,
    META_TRAIN,
    OUTER,
    Budget,
    SelectedSubset,
    remaining_pool,
    selection_accuracy,
)
from .strategy import StrategyKind, acquire

_EPISODE_TAG, _STEP_TAG, _VAL_TAG, _TEST_TAG, _OUTER_TAG = 11, 12, 13, 14, 15


def derive_seed(*parts: int) -> int:
    """Stable scalar seed from a tuple of non-negative integers."""
    seq = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(seq.generate_state(1, np.uint32)[0])


def tau_in(t: int, t_in: int) -> float:
    """Inner pseudo-label weight at step t (1-based): 0 before step 2, then
    an exponential ramp reaching 1 at the final step."""
    if not 1 <= t <= t_in:
        raise LogicError(f"inner step {t} outside [1, {t_in}]")
    if t < 2:
        return 0.0
    return math.exp(-5.0 * (1.0 - t / t_in) ** 2)


def tau_out(j: int, t_warm: int) -> float:
    """Outer pseudo-label weight at epoch j (1-based): exponential warm-up
    until the warm-start epoch, 1 afterwards. t_warm = 0 disables the ramp."""
    if j < 1:
        raise LogicError(f"epoch index {j} must be >= 1")
    if t_warm <= 0 or j > t_warm:
        return 1.0
    return math.exp(-5.0 * (1.0 - j / t_warm) ** 2)


@dataclass(frozen=True)
class Schedules:
    t_in: int
    t_out: int
    t_warm: int

    def __post_init__(self):
        if self.t_in < 1:
            raise ConfigError(f"need at least one inner step, got {self.t_in}")
        if not 0 <= self.t_warm:
            raise ConfigError(f"warm-start epoch must be >= 0, got {self.t_warm}")
        if self.t_out < 0:
            raise ConfigError(f"epoch count must be >= 0, got {self.t_out}")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float  # inner learning rate
    beta: float  # outer learning rate
    batch_tasks: int
    schedules: Schedules
    budget: Budget
    strategy: StrategyKind
    maximizer: MaximizerKind
    seed: int
    iterations_per_epoch: int
    episode_shape: EpisodeShape
    t_in_test: int = 10
    outer_selection: bool = True
    n_val_episodes: int = 20
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if not self.alpha > 0 or self.beta < 0:
            raise ConfigError(f"learning rates out of range: alpha={self.alpha} beta={self.beta}")
        if self.batch_tasks < 1 or self.iterations_per_epoch < 1 or self.t_in_test < 1:
            raise ConfigError("batch_tasks, iterations_per_epoch and t_in_test must be >= 1")
        if self.episode_shape.way != self.budget.way:
            raise ConfigError(
                f"budget is split over {self.budget.way} classes but episodes are "
                f"{self.episode_shape.way}-way"
            )

    def validate(self) -> None:
        if not self.beta > 0:
            raise ConfigError("outer learning rate must be positive for training")


def _pseudo_batch(episode: Episode, subset: SelectedSubset):
    if not subset.entries:
        return None
    idx = subset.indices()
    return episode.unlabeled_x[idx], subset.labels()


def adapt(
    theta: ParamVector,
    episode: Episode,
    cfg: TrainConfig,
    phase: str,
    rng_seed: int = 0,
) -> tuple[ParamVector, SelectedSubset, list[dict]]:
    """Inner loop: per step, select with the current parameters, then take one
    gradient step on support loss plus the ramped pseudo-label loss over
    everything selected so far."""
    t_steps = cfg.schedules.t_in if phase == META_TRAIN else cfg.t_in_test
    phi = theta
    a_s = SelectedSubset(origin=INNER)
    log = []
    for t in range(1, t_steps + 1):
        if cfg.strategy.selects:
            pool = remaining_pool(episode, a_s)
            picked = acquire(
                cfg.strategy, phi, episode, pool, cfg.budget.b_in, phase,
                derive_seed(rng_seed, t), maximizer=cfg.maximizer, origin=INNER, step=t,
            )
            a_s.extend(picked)
        tau = tau_in(t, t_steps)
        breakdown, grad = loss_and_grad(
            phi, (episode.support_x, episode.support_y), _pseudo_batch(episode, a_s), tau
        )
        phi = sgd_step(phi, grad, cfg.alpha)
        log.append(
            {
                "step": t,
                "tau_in": tau,
                "loss_labeled": breakdown.labeled,
                "loss_unlabeled": breakdown.unlabeled,
                "loss_total": breakdown.total,
                "n_selected": len(a_s),
            }
        )
    return phi, a_s, log


def meta_step(
    theta: ParamVector,
    episodes: list[Episode],
    epoch_j: int,
    cfg: TrainConfig,
    rng_seed: int = 0,
) -> tuple[ParamVector, dict]:
    """One outer update from a batch of tasks: adapt each, select the outer
    subset with the adapted parameters, average the outer gradients taken at
    those parameters, and step the initialization."""
    tau = tau_out(epoch_j, cfg.schedules.t_warm)
    grad_sum = np.zeros_like(theta.values)
    outer_losses: list[LossBreakdown] = []
    inner_totals: list[float] = []
    sel_label, sel_in_dist = [], []
    for i, episode in enumerate(episodes):
        phi, a_s, inner_log = adapt(theta, episode, cfg, META_TRAIN, derive_seed(rng_seed, i))
        inner_totals.append(inner_log[-1]["loss_total"])
        a_q = SelectedSubset(origin=OUTER)
        if cfg.outer_selection and cfg.strategy.selects:
            pool = remaining_pool(episode, a_s)
            a_q = acquire(
                cfg.strategy, phi, episode, pool, cfg.budget.b_out, META_TRAIN,
                derive_seed(rng_seed, i, _OUTER_TAG), maximizer=cfg.maximizer,
                origin=OUTER, step=0,
            )
        breakdown, grad = loss_and_grad(
            phi, (episode.query_x, episode.query_y), _pseudo_batch(episode, a_q), tau
        )
        grad_sum += grad.values
        outer_losses.append(breakdown)
        for subset in (a_s, a_q):
            if subset.entries:
                acc = selection_accuracy(subset, episode)
                sel_label.append(acc.label_match)
                sel_in_dist.append(acc.in_dist)
    theta_next = ParamVector(theta.values - cfg.beta * (grad_sum / len(episodes)), theta.shapes)
    step_log = {
        "tau_out": tau,
        "inner_total": float(np.mean(inner_totals)),
        "outer_labeled": float(np.mean([b.labeled for b in outer_losses])),
        "outer_unlabeled": float(np.mean([b.unlabeled for b in outer_losses])),
        "outer_total": float(np.mean([b.total for b in outer_losses])),
        "sel_label_match": float(np.mean(sel_label)) if sel_label else 0.0,
        "sel_in_dist": float(np.mean(sel_in_dist)) if sel_in_dist else 0.0,
    }
    return theta_next, step_log


def episode_accuracy(
    theta: ParamVector, episode: Episode, cfg: TrainConfig, rng_seed: int = 0
) -> tuple[float, SelectedSubset]:
    """Meta-test protocol for one episode: adapt on support + unlabeled only,
    then score argmax accuracy on the query set."""
    phi, a_s, _ = adapt(theta, episode, cfg, META_TEST, rng_seed)
    probs = forward_batch(phi, episode.query_x)
    acc = float(np.mean(probs.argmax(axis=1) == episode.query_y))
    return acc, a_s


def _check_feasible(cfg: TrainConfig, dataset: SyntheticDataset) -> None:
    shape = cfg.episode_shape
    n_lab = int(np.ceil(dataset.rho * dataset.per_class)) if dataset.rho < 1.0 else dataset.per_class
    n_lab = max(1, n_lab)
    if n_lab < shape.shot + shape.query_per_class:
        raise ConfigError(
            f"labeled ratio {dataset.rho} yields {n_lab} labeled points per class, "
            f"episodes need {shape.shot + shape.query_per_class}"
        )
    if dataset.per_class - n_lab < shape.unlabeled_per_class:
        raise ConfigError(
            f"only {dataset.per_class - n_lab} unlabeled points per class, "
            f"episodes need {shape.unlabeled_per_class}"
        )
    for split in (TRAIN, VAL):
        have = dataset.split_classes(split).size
        if have < shape.way + shape.ood_classes:
            raise ConfigError(
                f"split '{split}' has {have} classes, episodes need "
                f"{shape.way + shape.ood_classes}"
            )


def meta_train(cfg: TrainConfig, dataset: SyntheticDataset) -> tuple[ParamVector, list[dict]]:
    """Full meta-training; returns the best-validation checkpoint and one
    history record per epoch."""
    cfg.validate()
    _check_feasible(cfg, dataset)
    shapes = (dataset.dim, *cfg.hidden, cfg.episode_shape.way)
    theta = init_params(cfg.seed, shapes)
    best_theta, best_acc = theta.copy(), -1.0
    history: list[dict] = []
    for j in range(1, cfg.schedules.t_out + 1):
        t0 = time.perf_counter()
        acc_log: dict[str, float] = {}
        for it in range(1, cfg.iterations_per_epoch + 1):
            batch = [
                sample_episode(
                    dataset, TRAIN, cfg.episode_shape,
                    derive_seed(cfg.seed, _EPISODE_TAG, j, it, k),
                )
                for k in range(cfg.batch_tasks)
            ]
            theta, step_log = meta_step(theta, batch, j, cfg, derive_seed(cfg.seed, _STEP_TAG, j, it))
            for key, value in step_log.items():
                acc_log[key] = acc_log.get(key, 0.0) + value
        val_acc = _validation_accuracy(theta, dataset, cfg, j)
        if val_acc > best_acc:
            best_theta, best_acc = theta.copy(), val_acc
        record = {k: v / cfg.iterations_per_epoch for k, v in acc_log.items()}
        record["tau_out"] = tau_out(j, cfg.schedules.t_warm)
        record["epoch"] = j
        record["val_accuracy"] = val_acc
        record["wall_time_s"] = time.perf_counter() - t0
        history.append(record)
    return best_theta, history


def _validation_accuracy(
    theta: ParamVector, dataset: SyntheticDataset, cfg: TrainConfig, epoch_j: int
) -> float:
    accs = []
    for k in range(cfg.n_val_episodes):
        episode = sample_episode(
            dataset, VAL, cfg.episode_shape, derive_seed(cfg.seed, _VAL_TAG, epoch_j, k)
        )
        acc, _ = episode_accuracy(theta, episode, cfg, derive_seed(cfg.seed, _VAL_TAG, epoch_j, k, 1))
        accs.append(acc)
    return float(np.mean(accs)) if accs else 0.0


@dataclass
class MetaTestResult:
    mean_acc: float
    ci95: float
    accuracies: np.ndarray = field(repr=False, default_factory=lambda: np.array([]))
    selection_label_match: float = 0.0
    selection_in_dist: float = 0.0


def meta_test(theta_star: ParamVector, episodes: list[Episode], cfg: TrainConfig) -> MetaTestResult:
    """Average query accuracy over unseen-class episodes, with the usual
    1.96 * std / sqrt(n) half-width."""
    accs, sel_label, sel_in_dist = [], [], []
    for k, episode in enumerate(episodes):
        acc, a_s = episode_accuracy(theta_star, episode, cfg, derive_seed(cfg.seed, _TEST_TAG, k))
        accs.append(acc)
        if a_s.entries:
            sel = selection_accuracy(a_s, episode)
            sel_label.append(sel.label_match)
            sel_in_dist.append(sel.in_dist)
    accs = np.asarray(accs)
    ci95 = float(1.96 * accs.std(ddof=1) / np.sqrt(accs.size)) if accs.size > 1 else 0.0
    return MetaTestResult(
        mean_acc=float(accs.mean()) if accs.size else 0.0,
        ci95=ci95,
        accuracies=accs,
        selection_label_match=float(np.mean(sel_label)) if sel_label else 0.0,
        selection_in_dist=float(np.mean(sel_in_dist)) if sel_in_dist else 0.0,
    )
