import json
from pathlib import Path

import numpy as np
import pytest

from pocar import cli, harness
from pocar.harness import ConfigError, ExperimentConfig, MetricsSeries

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def bandit_cfg(**kw):
    return ExperimentConfig(env="bandit", agent=kw.pop("agent", "g_ppo"), **kw)


@pytest.fixture(scope="module")
def bandit_ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("bandit")
    return harness.run_training(bandit_cfg(ppo={"iterations": 5}), out, seed=0).checkpoint


# -- presets ----------------------------------------------------------------------

@pytest.mark.parametrize("env", ["attention", "lending", "disease"])
def test_greedy_ppo_has_no_fairness_weights(env):
    cfg = harness.make_ppo_config(env, "g_ppo")
    r = cfg.regularizer
    assert cfg.penalty_weight == 0.0
    assert (r.beta0, r.beta1, r.beta2) == (0.0, 0.0, 0.0)
    assert cfg.fairness_mode.value == "greedy"


@pytest.mark.parametrize("env,penalty,betas,normalize", [
    ("attention", 10.0, (0.05, 0.32, 0.63), False),
    ("lending", 2.0, (1.0, 0.5, 0.5), True),
    ("disease", 0.1, (0.6, 0.15, 0.25), True),
])
def test_table_presets(env, penalty, betas, normalize):
    assert harness.make_ppo_config(env, "r_ppo").penalty_weight == penalty
    r = harness.make_ppo_config(env, "a_ppo").regularizer
    assert (r.beta0, r.beta1, r.beta2) == betas
    assert r.normalize is normalize
    assert r.omega == 0.05


def test_budgets():
    assert harness.make_ppo_config("attention", "a_ppo").iterations == 400
    lend = harness.make_ppo_config("lending", "a_ppo")
    assert (lend.iterations, lend.episodes_per_iteration, lend.horizon) == (300, 8, 400)
    dis = harness.make_ppo_config("disease", "r_ppo")
    assert (dis.iterations, dis.episodes_per_iteration, dis.horizon) == (500, 16, 20)


def test_overrides_apply():
    cfg = harness.make_ppo_config("attention", "a_ppo", {"iterations": 3, "omega": 0.1,
                                                          "regularizer": {"beta2": 0.0}})
    assert cfg.iterations == 3 and cfg.regularizer.omega == 0.1 and cfg.regularizer.beta2 == 0.0


@pytest.mark.parametrize("env,agent", [("attention", "eo"), ("lending", "random"), ("disease", "purely_greedy"),
                                       ("bandit", "max_neighbor"), ("attention", "nonsense")])
def test_incompatible_agent_rejected(env, agent):
    with pytest.raises(ConfigError):
        ExperimentConfig(env=env, agent=agent)


def test_invalid_trials_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(env="lending", agent="eo", trials=0)


def test_training_baseline_rejected(tmp_path):
    with pytest.raises(ConfigError):
        harness.run_training(ExperimentConfig(env="lending", agent="eo"), tmp_path)


@pytest.mark.parametrize("name", ["attention_base", "attention_hard", "lending", "disease", "bandit"])
def test_shipped_configs_load(name):
    cfg = harness.load_config(CONFIGS / f"{name}.toml")
    env = harness.make_env(cfg.env, cfg.env_params)
    assert env.horizon >= 1
    if cfg.is_ppo:
        harness.make_ppo_config(cfg.env, cfg.agent, cfg.ppo)


def test_hard_config_has_ten_sites():
    cfg = harness.load_config(CONFIGS / "attention_hard.toml")
    assert harness.make_env(cfg.env, cfg.env_params).n_actions == 10


def test_config_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('[experiment]\nenv = "lending"\nagent = "eo"\ncolour = 3\n')
    with pytest.raises(ConfigError):
        harness.load_config(p)
    p.write_text("[experiment\n")
    with pytest.raises(ConfigError):
        harness.load_config(p)
    p.write_text('[experiment]\nenv = "lending"\nagent = "eo"\n[env]\nwidth = 3\n')
    cfg = harness.load_config(p)
    with pytest.raises(ConfigError):
        harness.make_env(cfg.env, cfg.env_params)


# -- training and evaluation -----------------------------------------------------------

def test_same_seed_gives_identical_checkpoints(tmp_path):
    cfg = bandit_cfg(ppo={"iterations": 3})
    a = harness.run_training(cfg, tmp_path / "a", seed=1)
    b = harness.run_training(cfg, tmp_path / "b", seed=1)
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    assert a.log.read_bytes() == b.log.read_bytes()


def test_checkpoint_records_advantage_method(bandit_ckpt):
    meta = json.loads(Path(bandit_ckpt).read_text())["meta"]
    assert meta["ppo"]["advantage_method"] == "returns"
    assert meta["env"] == "bandit"


def test_checkpoint_env_mismatch_rejected(bandit_ckpt):
    with pytest.raises(ConfigError):
        harness.run_eval(ExperimentConfig(env="lending", agent="a_ppo", trials=1), bandit_ckpt)


def test_eval_needs_checkpoint_for_ppo():
    with pytest.raises(ConfigError):
        harness.run_eval(bandit_cfg(trials=1))


def test_eval_does_not_touch_checkpoint(bandit_ckpt):
    before = Path(bandit_ckpt).read_bytes()
    harness.run_eval(bandit_cfg(trials=2), bandit_ckpt)
    assert Path(bandit_ckpt).read_bytes() == before


def test_attention_eval_shapes():
    m = harness.run_eval(ExperimentConfig(env="attention", agent="purely_greedy", trials=10))
    assert m.reward.shape == (10, 200)
    assert m.mean("reward").shape == (200,)
    np.testing.assert_allclose(m.mean("mean_rate"), np.mean(m.extras["mean_rate"], axis=0), rtol=0, atol=1e-12)
    for t in (0, 57, 199):
        assert m.mean("reward")[t] == pytest.approx(sum(m.reward[:, t]) / 10, abs=1e-12)


def test_disease_random_delta_summary_length():
    m = harness.run_eval(ExperimentConfig(env="disease", agent="random", trials=200))
    assert m.delta_summary().shape == (200,)
    assert m.horizon == 20


def test_trials_are_seeded_by_index():
    a = harness.run_eval(ExperimentConfig(env="lending", agent="greedy_lend", trials=3, seed=7))
    b = harness.run_eval(ExperimentConfig(env="lending", agent="greedy_lend", trials=1, seed=9))
    np.testing.assert_array_equal(a.reward[2], b.reward[0])


def test_parallel_and_serial_eval_agree():
    cfg = ExperimentConfig(env="disease", agent="random", trials=6, seed=3)
    serial = harness.run_eval(cfg)
    parallel = harness.run_eval(ExperimentConfig(env="disease", agent="random", trials=6, seed=3, workers=2))
    for k, v in serial.series().items():
        assert v.tobytes() == parallel.series()[k].tobytes()


def test_argmax_policy_eval_is_repeatable(bandit_ckpt):
    cfg = bandit_cfg(trials=3, eval_mode="argmax")
    a = harness.run_eval(cfg, bandit_ckpt)
    b = harness.run_eval(cfg, bandit_ckpt)
    assert a.reward.tobytes() == b.reward.tobytes()
    assert np.all(a.reward == a.reward[0, 0])


# Δ recomputed offline from the logged accumulators must match what was exported

def test_attention_delta_recomputable():
    m = harness.run_eval(ExperimentConfig(env="attention", agent="purely_greedy", trials=2))
    k = 5
    disc = np.stack([m.extras[f"discovered_{i}"] for i in range(k)], axis=-1)
    occ = np.stack([m.extras[f"occurred_{i}"] for i in range(k)], axis=-1)
    ratio = disc / (occ + 1)
    np.testing.assert_allclose(m.delta, ratio.max(-1) - ratio.min(-1), atol=1e-12)


def test_lending_delta_recomputable():
    m = harness.run_eval(ExperimentConfig(env="lending", agent="greedy_lend", trials=2))
    tpr = []
    for g in (1, 2):
        tp, fn = m.extras[f"tp_g{g}"], m.extras[f"fn_g{g}"]
        tpr.append(np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0))
    np.testing.assert_allclose(m.delta, np.abs(tpr[0] - tpr[1]), atol=1e-12)


def test_disease_delta_recomputable():
    m = harness.run_eval(ExperimentConfig(env="disease", agent="max_neighbor", trials=2))
    r = [m.extras[f"vaccinations_{c}"] / (m.extras[f"new_infections_{c}"] + 1) for c in (1, 2)]
    np.testing.assert_allclose(m.delta, np.abs(r[0] - r[1]), atol=1e-12)


# -- export -------------------------------------------------------------------------

def test_csv_header_without_extras(tmp_path, bandit_ckpt):
    m = harness.run_eval(bandit_cfg(trials=2), bandit_ckpt)
    path = harness.export_metrics(m, tmp_path / "m.csv")
    assert path.read_text().splitlines()[0] == "t,trial,reward,delta"


def test_csv_row_count(tmp_path):
    m = MetricsSeries(np.zeros((10, 200)), np.zeros((10, 200)))
    path = harness.export_metrics(m, tmp_path / "m.csv")
    assert len(path.read_text().splitlines()) == 2001


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(0)
    m = MetricsSeries(rng.normal(size=(3, 7)), rng.uniform(size=(3, 7)), {"x": rng.normal(size=(3, 7)) * 1e-9})
    back = harness.read_metrics(harness.export_metrics(m, tmp_path / f"m.{fmt}", fmt))
    for k, v in m.series().items():
        np.testing.assert_array_equal(back.series()[k], v)


def test_json_contains_aggregates(tmp_path):
    m = MetricsSeries(np.arange(6.0).reshape(2, 3), np.ones((2, 3)))
    doc = json.loads(harness.export_metrics(m, tmp_path / "m.json", "json").read_text())
    assert doc["aggregates"]["reward"]["mean"] == [1.5, 2.5, 3.5]
    assert doc["delta_summary"] == [1.0, 1.0]


def test_unwritable_path_surfaces(tmp_path):
    m = MetricsSeries(np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(OSError):
        harness.export_metrics(m, tmp_path / "missing" / "m.csv")


def test_inconsistent_series_rejected():
    with pytest.raises(ValueError):
        MetricsSeries(np.zeros((2, 3)), np.zeros((2, 4)))


# -- command line ---------------------------------------------------------------------

def write_bandit_config(tmp_path):
    p = tmp_path / "bandit.toml"
    p.write_text('[experiment]\nenv = "bandit"\nagent = "g_ppo"\ntrials = 3\n[ppo]\niterations = 4\n')
    return p


def test_cli_train_then_eval(tmp_path, capsys):
    cfg = write_bandit_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "run")]) == 0
    ckpt = tmp_path / "run" / "bandit_g_ppo_seed2.json"
    assert ckpt.exists() and (tmp_path / "run" / "bandit_g_ppo_seed2_train.csv").exists()
    assert cli.main(["eval", "--config", str(cfg), "--checkpoint", str(ckpt), "--trials", "2",
                     "--out", str(tmp_path / "ev")]) == 0
    m = harness.read_metrics(tmp_path / "ev" / "bandit_g_ppo_eval.csv")
    assert m.trials == 2


def test_cli_outputs_are_byte_identical(tmp_path):
    cfg = write_bandit_config(tmp_path)
    for d in ("a", "b"):
        assert cli.main(["train", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / d)]) == 0
        assert cli.main(["eval", "--config", str(cfg), "--checkpoint",
                         str(tmp_path / d / "bandit_g_ppo_seed0.json"), "--out", str(tmp_path / d)]) == 0
    for name in ("bandit_g_ppo_seed0_train.csv", "bandit_g_ppo_eval.csv", "bandit_g_ppo_seed0.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_baseline_eval(tmp_path):
    assert cli.main(["eval", "--config", str(CONFIGS / "lending.toml"), "--agent", "eo", "--trials", "2",
                     "--format", "json", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "lending_eo_eval.json").exists()


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "nope.toml")]) != 0
    assert cli.main(["eval", "--config", str(CONFIGS / "lending.toml"), "--agent", "random"]) != 0
    assert "error" in capsys.readouterr().err


def test_cli_communities(tmp_path):
    out = tmp_path / "c.json"
    assert cli.main(["communities", "--graph", "karate", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert sorted(set(doc["labels"])) == [1, 2]
    edges = tmp_path / "g.txt"
    edges.write_text("0 1\n1 2\n0 2\n2 3\n3 4\n4 5\n3 5\n")
    assert cli.main(["communities", "--graph", str(edges), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["labels"] == [1, 1, 1, 2, 2, 2]
