import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radium import grad as ad
from radium.baselines import (
    BaselineConfig, gd_adversarial, gd_random, l2c_repair, reinforce_adversary, reinforce_gradient,
    run_baseline,
)
from radium.core import ConfigError, InvalidValue, RngStream, UnknownKey, config_from_dict
from radium.envs import FunctionEnv, make_env
from radium.radium import radium_budget, radium_run

C = np.array([0.5, -1.5, 2.0])


def bowl_env():
    return FunctionEnv(lambda t, p: ad.sum((t - C) ** 2, axis=-1) + 0.0 * ad.sum(p, axis=-1),
                       np.zeros(3), np.zeros(3), 1.0, 1.0)


def saddle_env():
    return FunctionEnv(lambda t, p: ad.sum(t * p, axis=-1), np.zeros(1), np.zeros(1), 1.0, 1.0)


def concave_env():
    return FunctionEnv(lambda t, p: -ad.sum((p - 0.7) ** 2, axis=-1) + 0.0 * ad.sum(t, axis=-1),
                       np.zeros(1), np.zeros(1), 1.0, 1.0)


def test_gd_random_converges_on_bowl():
    res = gd_random(np.zeros(3), bowl_env(), BaselineConfig(method="gdr", budget=2000, lr_theta=0.1))
    assert np.linalg.norm(res.theta - C) < 1e-3


def test_zero_learning_rate_returns_start():
    theta0 = np.array([0.1, 0.2, 0.3])
    res = gd_random(theta0, bowl_env(), BaselineConfig(method="gdr", budget=500, lr_theta=0.0))
    np.testing.assert_array_equal(res.theta, theta0)


def test_gd_random_is_deterministic():
    env = make_env("search_3v5")
    cfg = BaselineConfig(method="gdr", budget=200, seed=4)
    a, b = gd_random(env.theta0, env, cfg), gd_random(env.theta0, env, cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.phis, b.phis)


def test_gda_without_ascent_is_gdr():
    env = make_env("search_3v5")
    cfg = BaselineConfig(method="gda", budget=300, inner_phi=0, lr_theta=0.05, seed=2)
    a = gd_adversarial(env.theta0, env, cfg)
    b = gd_random(env.theta0, env, cfg.__class__(**{**cfg.to_dict(), "method": "gdr"}))
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.phis, b.phis)


def test_gda_on_bilinear_saddle_does_not_settle():
    cfg = BaselineConfig(method="gda", budget=4000, lr_theta=0.1, lr_phi=0.1, counterexamples=1, box=3.0)
    res = gd_adversarial(np.array([0.5]), saddle_env(), cfg)
    assert np.hypot(res.theta[0], res.phis[0, 0]) > 0.1


def test_gda_phi_ascent_finds_concave_max():
    cfg = BaselineConfig(method="gda", budget=2000, lr_theta=0.0, lr_phi=0.1, counterexamples=4)
    res = gd_adversarial(np.zeros(1), concave_env(), cfg)
    np.testing.assert_allclose(res.phis, 0.7, atol=1e-3)


@pytest.mark.parametrize("method", ["gdr", "gda", "l2c"])
@pytest.mark.parametrize("budget", [997, 1000])
def test_budget_is_spent_exactly(method, budget):
    env = make_env("search_3v5")
    res = run_baseline(env.theta0, env, BaselineConfig(method=method, budget=budget, batch=6))
    assert res.evaluations == budget


def test_budget_matches_radium():
    cfg = config_from_dict(dict(env_name="search_3v5", rounds=2, steps_per_round=3, population=4,
                                quench_rounds=1))
    env = make_env("search_3v5")
    rad = radium_run(cfg, env)
    assert rad.evaluations == radium_budget(cfg)
    for method in ("gdr", "gda", "l2c"):
        res = run_baseline(env.theta0, env, BaselineConfig(method=method, budget=radium_budget(cfg)))
        assert res.evaluations == rad.evaluations


def test_reinforce_unbiased_on_linear_cost():
    a = np.array([1.0, -2.0, 0.5])
    fn = lambda x: x @ a  # noqa: E731
    rng = RngStream(0, 1)
    est = np.mean([reinforce_gradient(fn, np.zeros(3), 0.1, 8, rng) for _ in range(10_000)], axis=0)
    cos = est @ a / (np.linalg.norm(est) * np.linalg.norm(a))
    assert cos > 0.99


def test_reinforce_variance_grows_as_sigma_shrinks():
    fn = lambda x: np.sum((x - 1.0) ** 2, axis=-1)  # noqa: E731
    x = np.zeros(2)

    def var(sigma):
        rng = RngStream(3, 3)
        g = np.array([reinforce_gradient(fn, x, sigma, 4, rng) for _ in range(2000)])
        return g.var(axis=0).sum()

    assert var(1e-3) > var(1e-1)


def test_reinforce_zero_on_flat_landscape():
    rng = RngStream(1, 1)
    g = np.array([reinforce_gradient(lambda x: np.zeros(len(x)), np.ones(2), 0.5, 5, rng) for _ in range(200)])
    np.testing.assert_array_equal(g, 0.0)


def test_reinforce_adversary_raises_cost():
    env = FunctionEnv(lambda t, p: ad.sum(p, axis=-1) + 0.0 * ad.sum(t, axis=-1), np.zeros(2), np.zeros(2))
    cfg = BaselineConfig(method="l2c", budget=4000, lr_phi=0.05, sigma=0.1, counterexamples=3, box=2.0)
    res = reinforce_adversary(np.zeros(2), env, cfg)
    assert res.evaluations == 4000
    assert np.all(res.phis.sum(axis=1) > 2.0)


def test_l2c_improves_bowl():
    env = bowl_env()
    res = l2c_repair(np.zeros(3), env, BaselineConfig(method="l2c", budget=20_000, lr_theta=0.05, sigma=0.1,
                                                      batch=8, counterexamples=2))
    assert np.linalg.norm(res.theta - C) < 0.5 * np.linalg.norm(C)


@pytest.mark.parametrize("bad", [dict(budget=0), dict(lr_theta=-1.0), dict(sigma=0.0), dict(batch=1),
                                 dict(method="ppo"), dict(inner_theta=0, inner_phi=0), dict(counterexamples=0)])
def test_config_validation(bad):
    with pytest.raises(InvalidValue):
        BaselineConfig(**bad)


def test_config_from_dict():
    assert BaselineConfig.from_dict({"method": "gdr", "budget": 5}).budget == 5
    with pytest.raises(UnknownKey):
        BaselineConfig.from_dict({"lr": 0.1})
    with pytest.raises(ConfigError):
        BaselineConfig.from_dict({"budget": "many"})


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_result_dict_round_trip(seed):
    res = gd_random(np.zeros(3), bowl_env(), BaselineConfig(method="gdr", budget=50, seed=seed))
    doc = res.to_dict()
    assert doc["method"] == "gdr" and doc["evaluations"] == 50
    assert len(doc["failures"]) == 10
