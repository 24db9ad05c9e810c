import math
from dataclasses import replace

import numpy as np
import pytest

from metasmi.episodes import EpisodeShape, gen_synthetic, sample_episode, split_labeled
from metasmi.errors import ConfigError, LogicError
from metasmi.meta import (
    META_TEST,
    META_TRAIN,
    MetaTestResult,
    Schedules,
    _OUTER_TAG,
    adapt,
    derive_seed,
    episode_accuracy,
    meta_step,
    meta_test,
    meta_train,
    tau_in,
    tau_out,
)
from metasmi.net import init_params, loss_and_grad, sgd_step
from metasmi.select import Budget, remaining_pool
from metasmi.strategy import acquire, parse_strategy
from conftest import small_config, small_dataset, small_episode


def test_tau_in_values():
    assert tau_in(1, 5) == 0.0
    assert tau_in(5, 5) == pytest.approx(1.0)
    assert tau_in(3, 5) == pytest.approx(math.exp(-0.8), abs=1e-12)
    with pytest.raises(LogicError):
        tau_in(0, 5)
    with pytest.raises(LogicError):
        tau_in(6, 5)


def test_tau_out_values():
    assert tau_out(11, 10) == 1.0
    assert tau_out(10, 10) == pytest.approx(1.0)
    assert tau_out(5, 10) == pytest.approx(math.exp(-1.25), abs=1e-12)
    assert tau_out(3, 0) == 1.0  # no warm-up configured
    with pytest.raises(LogicError):
        tau_out(0, 10)


def test_schedules_bounded_and_monotone():
    for t_in in (1, 2, 5, 9):
        vals = [tau_in(t, t_in) for t in range(1, t_in + 1)]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    for t_warm in (0, 1, 4, 9):
        vals = [tau_out(j, t_warm) for j in range(1, 12)]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(alpha=0.0)
    with pytest.raises(ConfigError):
        Schedules(t_in=0, t_out=1, t_warm=0)
    cfg = small_config(beta=0.0)  # allowed for direct meta_step use
    with pytest.raises(ConfigError):
        cfg.validate()  # but rejected for training
    with pytest.raises(ConfigError):
        small_config(budget=Budget(4, 4, 2))  # way mismatch with 3-way episodes


def test_adapt_supervised_matches_manual_inner_loop():
    ds = small_dataset()
    ep = small_episode(dataset=ds)
    cfg = small_config("supervised")
    theta = init_params(3, (ds.dim, *cfg.hidden, ep.way))
    phi, a_s, log = adapt(theta, ep, cfg, META_TRAIN, rng_seed=7)
    assert len(a_s) == 0

    ref = theta
    for t in range(1, cfg.schedules.t_in + 1):
        _, grad = loss_and_grad(ref, (ep.support_x, ep.support_y), None, tau_in(t, cfg.schedules.t_in))
        ref = sgd_step(ref, grad, cfg.alpha)
    assert np.array_equal(phi.values, ref.values)  # bit-identical


def test_adapt_single_step_runs_selection_but_weights_it_zero():
    ds = small_dataset()
    ep = small_episode(dataset=ds)
    cfg = small_config("flmi", schedules=Schedules(t_in=1, t_out=2, t_warm=1))
    theta = init_params(4, (ds.dim, *cfg.hidden, ep.way))
    phi, a_s, log = adapt(theta, ep, cfg, META_TRAIN, rng_seed=1)
    assert len(a_s) == cfg.budget.b_in  # selection happened
    assert log[0]["tau_in"] == 0.0  # but contributed nothing
    sup_phi, _, _ = adapt(theta, ep, replace(cfg, strategy=parse_strategy("supervised")),
                          META_TRAIN, rng_seed=1)
    assert np.array_equal(phi.values, sup_phi.values)


def test_adapt_gradient_path_sensitivity():
    ds = small_dataset()
    ep = small_episode(dataset=ds)
    cfg = small_config("flmi")
    theta = init_params(5, (ds.dim, *cfg.hidden, ep.way))
    phi, a_s, _ = adapt(theta, ep, cfg, META_TRAIN, rng_seed=2)
    assert 0 < len(a_s) <= cfg.schedules.t_in * cfg.budget.b_in
    assert len(np.unique(a_s.indices())) == len(a_s)

    poked = small_episode(dataset=ds)
    poked.unlabeled_x = poked.unlabeled_x.copy()
    poked.unlabeled_x[a_s.entries[0].pool_index] += 0.05
    phi2, _, _ = adapt(theta, poked, cfg, META_TRAIN, rng_seed=2)
    assert not np.array_equal(phi.values, phi2.values)

    sup = replace(cfg, strategy=parse_strategy("supervised"))
    a, _, _ = adapt(theta, ep, sup, META_TRAIN, rng_seed=2)
    b, _, _ = adapt(theta, poked, sup, META_TRAIN, rng_seed=2)
    assert np.array_equal(a.values, b.values)


def test_adapt_meta_test_uses_its_own_step_count():
    ds = small_dataset()
    ep = small_episode(dataset=ds, split="val")
    cfg = small_config("flmi")
    theta = init_params(6, (ds.dim, *cfg.hidden, ep.way))
    _, a_s, log = adapt(theta, ep, cfg, META_TEST, rng_seed=3)
    assert len(log) == cfg.t_in_test
    assert len(a_s) <= cfg.t_in_test * cfg.budget.b_in


def test_meta_step_zero_beta_keeps_theta():
    ds = small_dataset()
    eps = [small_episode(seed=s, dataset=ds) for s in (0, 1)]
    cfg = small_config("flmi", beta=0.0, batch_tasks=2)
    theta = init_params(7, (ds.dim, *cfg.hidden, 3))
    theta2, _ = meta_step(theta, eps, 1, cfg, rng_seed=5)
    assert np.array_equal(theta2.values, theta.values)


def test_meta_step_first_order_contract():
    # the update must equal beta times the mean outer gradient taken at the
    # adapted parameters, reconstructed here independently
    ds = small_dataset()
    eps = [small_episode(seed=s, dataset=ds) for s in (3, 4)]
    cfg = small_config("flmi", batch_tasks=2)
    theta = init_params(8, (ds.dim, *cfg.hidden, 3))
    epoch = 1
    seed = 42
    theta2, _ = meta_step(theta, eps, epoch, cfg, rng_seed=seed)

    grads = []
    for i, ep in enumerate(eps):
        phi, a_s, _ = adapt(theta, ep, cfg, META_TRAIN, derive_seed(seed, i))
        a_q = acquire(cfg.strategy, phi, ep, remaining_pool(ep, a_s), cfg.budget.b_out,
                      META_TRAIN, derive_seed(seed, i, _OUTER_TAG),
                      maximizer=cfg.maximizer, origin="outer")
        pseudo = (ep.unlabeled_x[a_q.indices()], a_q.labels()) if len(a_q) else None
        _, grad = loss_and_grad(phi, (ep.query_x, ep.query_y), pseudo, tau_out(epoch, cfg.schedules.t_warm))
        grads.append(grad.values)
    expect = theta.values - cfg.beta * np.mean(grads, axis=0)
    assert np.max(np.abs(theta2.values - expect)) < 1e-12


def test_meta_step_supervised_is_fomaml():
    ds = small_dataset()
    ep = small_episode(seed=9, dataset=ds)
    cfg = small_config("supervised")
    theta = init_params(9, (ds.dim, *cfg.hidden, 3))
    theta2, log = meta_step(theta, [ep], 1, cfg, rng_seed=0)
    phi, _, _ = adapt(theta, ep, cfg, META_TRAIN, derive_seed(0, 0))
    _, grad = loss_and_grad(phi, (ep.query_x, ep.query_y), None, tau_out(1, cfg.schedules.t_warm))
    assert np.array_equal(theta2.values, theta.values - cfg.beta * grad.values)
    assert log["outer_unlabeled"] == 0.0


def test_outer_selection_toggle_zeroes_unlabeled_loss():
    ds = small_dataset()
    ep = small_episode(seed=13, dataset=ds)
    cfg = small_config("flmi", outer_selection=False,
                       schedules=Schedules(t_in=3, t_out=2, t_warm=0))
    theta = init_params(12, (ds.dim, *cfg.hidden, 3))
    _, log = meta_step(theta, [ep], 2, cfg, rng_seed=1)
    assert log["tau_out"] == 1.0  # the weight is live
    assert log["outer_unlabeled"] == 0.0  # but there is nothing to weigh


def test_meta_train_zero_epochs_returns_init():
    ds = small_dataset()
    cfg = small_config("flmi", schedules=Schedules(t_in=3, t_out=0, t_warm=0))
    theta, history = meta_train(cfg, ds)
    assert history == []
    assert np.array_equal(theta.values, init_params(cfg.seed, (ds.dim, *cfg.hidden, 3)).values)


def _strip_timing(history):
    return [{k: v for k, v in rec.items() if k != "wall_time_s"} for rec in history]


def test_meta_train_deterministic():
    ds = small_dataset()
    cfg = small_config("flmi")
    a_theta, a_hist = meta_train(cfg, ds)
    b_theta, b_hist = meta_train(cfg, ds)
    assert np.array_equal(a_theta.values, b_theta.values)
    assert _strip_timing(a_hist) == _strip_timing(b_hist)


def test_meta_train_rejects_infeasible_config():
    ds = small_dataset()
    bad = small_config("flmi", episode_shape=replace(small_config().episode_shape, ood_classes=9),
                       budget=Budget(6, 6, 3))
    with pytest.raises(ConfigError):
        meta_train(bad, ds)


def test_meta_test_chance_level_and_ci():
    # constant class-0 predictor: adaptation is frozen by a vanishing
    # learning rate, so accuracy is exactly one over way
    raw = gen_synthetic(11, 16, 8, 40, 0.25, class_counts=(6, 5, 5))
    ds = split_labeled(raw, 0.3, 1)
    shape = EpisodeShape(way=5, shot=1, query_per_class=3, unlabeled_per_class=5)
    cfg = small_config(
        "supervised", alpha=1e-30, budget=Budget(5, 5, 5), episode_shape=shape, t_in_test=1
    )
    theta = init_params(0, (ds.dim, *cfg.hidden, 5))
    theta.values[:] = 0.0
    theta.values[-5] = 5.0  # output bias for class 0
    episodes = [sample_episode(ds, "test", shape, s) for s in range(4)]
    result = meta_test(theta, episodes, cfg)
    assert result.mean_acc == pytest.approx(0.2)
    single = meta_test(theta, episodes[:1], cfg)
    assert single.ci95 == 0.0
    assert isinstance(result, MetaTestResult)


def test_meta_test_reproducible():
    ds = small_dataset()
    cfg = small_config("flmi")
    theta = init_params(10, (ds.dim, *cfg.hidden, 3))
    episodes = [small_episode(seed=s, split="test", dataset=ds) for s in range(5)]
    a = meta_test(theta, episodes, cfg)
    b = meta_test(theta, episodes, cfg)
    assert a.mean_acc == b.mean_acc and a.ci95 == b.ci95
    assert np.array_equal(a.accuracies, b.accuracies)
