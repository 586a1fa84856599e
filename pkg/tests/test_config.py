import pytest

from shelfrl.config import RunConfig, desk_config


def test_defaults():
    cfg = RunConfig()
    assert cfg.data.train_periods == 900 and cfg.data.test_periods == 496
    assert cfg.data.tightness == 0.9 and cfg.dynamics.alpha == 0.5 and cfg.dynamics.gamma == 0.99
    assert cfg.agent.n_actions == 21 and cfg.agent.q == 2.0 and cfg.agent.x_star == 0.5
    assert cfg.run.episodes == 600 and cfg.run.checkpoint_every == 50


def test_ini_round_trip():
    cfg = desk_config(seed=3).override("agent", q=4.0).override("run", resample_orders=True)
    back = RunConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.sha256() == cfg.sha256()


def test_hash_changes_with_any_field():
    a = desk_config(seed=1)
    assert a.sha256() != a.override("sgd", momentum=0.7).sha256()


def test_unknown_option_rejected():
    with pytest.raises(ValueError, match="unknown option"):
        RunConfig.from_ini("[agent]\nbogus = 1\n")


def test_bad_values_rejected():
    with pytest.raises(ValueError):
        RunConfig.from_ini("[run]\nresample_orders = maybe\n")
    with pytest.raises(ValueError):
        RunConfig.from_ini("[agent]\nq = fast\n")


def test_validation():
    with pytest.raises(ValueError, match="seed"):
        RunConfig().validate()
    with pytest.raises(ValueError, match="agent"):
        desk_config().override("run", agent="ddpg").validate()
    with pytest.raises(ValueError, match="train_periods"):
        desk_config().override("data", train_periods=401).validate()
    desk_config().validate()


def test_agent_params_merge_sections():
    params = desk_config(seed=5).agent_params()
    assert params["random_state"] == 5 and params["gamma"] == 0.5
    assert params["learning_rate"] == 0.1 and params["action_max"] == 0.3


def test_desk_instance_shape():
    cfg = desk_config()
    assert cfg.data.products == 20 and cfg.run.episodes == 150
    assert cfg.data.train_periods == 400 and cfg.data.test_periods == 100
    assert cfg.data.days * cfg.data.periods_per_day == 500
