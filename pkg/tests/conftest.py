import numpy as np
import pytest

from metasmi.episodes import EpisodeShape, gen_synthetic, sample_episode, split_labeled
from metasmi.kernel import Kernel
from metasmi.maximize import MaximizerKind
from metasmi.meta import Schedules, TrainConfig
from metasmi.select import Budget
from metasmi.strategy import parse_strategy

# Worked 2x3 kernel used throughout the set-function tests.
TOY_VALUES = np.array([[0.9, 0.1, 0.5], [0.2, 0.8, 0.4]])


@pytest.fixture
def toy_kernel():
    return Kernel(TOY_VALUES.copy(), row_class=[0, 0], col_index=[0, 1, 2])


def random_kernel(rng, rows, cols):
    return Kernel(
        rng.uniform(0.0, 1.0, size=(rows, cols)),
        row_class=np.zeros(rows, dtype=int),
        col_index=np.arange(cols),
    )


def random_square_kernel(rng, n, symmetric=False):
    v = rng.uniform(0.0, 1.0, size=(n, n))
    if symmetric:
        v = (v + v.T) / 2.0
    return Kernel(v, row_class=np.zeros(n, dtype=int), col_index=np.arange(n))


def small_dataset(seed=7, rho=0.3, classes=10, per_class=40, dim=8, spread=0.25):
    raw = gen_synthetic(seed, classes, dim, per_class, spread, class_counts=(4, 3, 3))
    return split_labeled(raw, rho, seed + 1)


def small_shape(ood_classes=0):
    return EpisodeShape(way=3, shot=1, query_per_class=3, unlabeled_per_class=10,
                        ood_classes=ood_classes)


def small_episode(seed=3, ood_classes=0, split="train", dataset=None):
    ds = dataset if dataset is not None else small_dataset()
    return sample_episode(ds, split, small_shape(ood_classes), seed)


def small_config(strategy="flmi", seed=0, **overrides):
    kwargs = dict(
        alpha=0.1,
        beta=0.05,
        batch_tasks=1,
        schedules=Schedules(t_in=3, t_out=2, t_warm=1),
        budget=Budget(6, 6, 3),
        strategy=parse_strategy(strategy),
        maximizer=MaximizerKind("lazy"),
        seed=seed,
        iterations_per_epoch=3,
        episode_shape=small_shape(),
        t_in_test=4,
        n_val_episodes=2,
        hidden=(16,),
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)
