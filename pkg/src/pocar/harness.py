"""Experiment plumbing: configs, training runs, multi-trial evaluation and metric export."""
from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import baselines, nn
from .envs import AttentionConfig, AttentionEnv, BanditEnv, DiseaseConfig, DiseaseEnv, LendingConfig, LendingEnv
from .envs.base import Env
from .envs.graph import SocialGraph, girvan_newman_bisect, karate_graph, read_edgelist
from .ppo import FairnessMode, PpoConfig, RegularizerConfig, train

PPO_AGENTS = ("g_ppo", "r_ppo", "a_ppo")
BASELINE_AGENTS = {
    "attention": ("purely_greedy",),
    "lending": ("greedy_lend", "eo"),
    "disease": ("random", "max_neighbor"),
    "bandit": (),
}

# Per-environment fairness weights for the PPO variants and the training budget.
PRESETS: dict[str, dict[str, Any]] = {
    "attention": {
        "r_ppo": {"penalty_weight": 10.0},
        "a_ppo": {"regularizer": {"beta0": 0.05, "beta1": 0.32, "beta2": 0.63, "normalize": False}},
        "budget": {"iterations": 400, "episodes_per_iteration": 8, "horizon": 200},
    },
    "lending": {
        "r_ppo": {"penalty_weight": 2.0},
        "a_ppo": {"regularizer": {"beta0": 1.0, "beta1": 0.5, "beta2": 0.5, "normalize": True}},
        "budget": {"iterations": 300, "episodes_per_iteration": 8, "horizon": 400, "gamma": 0.9},
    },
    "disease": {
        "r_ppo": {"penalty_weight": 0.1},
        "a_ppo": {"regularizer": {"beta0": 0.6, "beta1": 0.15, "beta2": 0.25, "normalize": True}},
        "budget": {"iterations": 500, "episodes_per_iteration": 16, "horizon": 20},
    },
    "bandit": {
        "r_ppo": {"penalty_weight": 0.0},
        "a_ppo": {"regularizer": {"beta0": 1.0, "beta1": 0.0, "beta2": 0.0}},
        "budget": {"iterations": 50, "episodes_per_iteration": 4, "horizon": 16,
                   "minibatch_size": 64, "hidden_sizes": (16,), "policy_step": 3e-3},
    },
}

_MODES = {"g_ppo": FairnessMode.GREEDY, "r_ppo": FairnessMode.REWARD_PENALTY,
          "a_ppo": FairnessMode.ADVANTAGE_REGULARIZED}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str
    agent: str
    env_params: dict[str, Any] = field(default_factory=dict)
    ppo: dict[str, Any] = field(default_factory=dict)
    baseline: dict[str, Any] = field(default_factory=dict)
    trials: int = 10
    seed: int = 0
    eval_mode: str = "sample"
    workers: int = 1
    out: str = "runs"

    def __post_init__(self):
        if self.env not in PRESETS:
            raise ConfigError(f"unknown environment {self.env!r}; expected one of {sorted(PRESETS)}")
        self.agent = self.agent.lower().replace("-", "_")
        if self.agent not in PPO_AGENTS and self.agent not in BASELINE_AGENTS[self.env]:
            raise ConfigError(f"agent {self.agent!r} cannot act in the {self.env} environment")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.eval_mode not in ("sample", "argmax"):
            raise ConfigError("eval_mode must be 'sample' or 'argmax'")

    @property
    def is_ppo(self) -> bool:
        return self.agent in PPO_AGENTS

    def with_agent(self, agent: str) -> ExperimentConfig:
        return replace(self, agent=agent)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML experiment file.

    Layout: ``[experiment]`` holds env, agent, trials, seed, eval_mode, out;
    ``[env]``, ``[ppo]`` and ``[baseline]`` hold the respective parameters.
    Keyword overrides replace ``[experiment]`` entries (None is ignored).
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    exp = dict(raw.get("experiment", {}))
    exp.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)} - {"env_params", "ppo", "baseline"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    if "env" not in exp or "agent" not in exp:
        raise ConfigError("[experiment] needs both 'env' and 'agent'")
    return ExperimentConfig(env_params=dict(raw.get("env", {})), ppo=dict(raw.get("ppo", {})),
                            baseline=dict(raw.get("baseline", {})), **exp)


# -- construction ----------------------------------------------------------------

def _graph(params: dict[str, Any]) -> SocialGraph:
    path = params.pop("graph", None)
    if path is None:
        return karate_graph()
    n, edges = read_edgelist(path)
    return SocialGraph(n, tuple(edges), girvan_newman_bisect(n, edges))


def make_env(name: str, params: dict[str, Any] | None = None) -> Env:
    params = dict(params or {})
    try:
        if name == "attention":
            return AttentionEnv(AttentionConfig(**params))
        if name == "lending":
            return LendingEnv(LendingConfig(**params))
        if name == "disease":
            graph = _graph(params)
            return DiseaseEnv(graph, DiseaseConfig(**params))
        if name == "bandit":
            return BanditEnv(**params)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] environment parameters: {exc}") from exc
    raise ConfigError(f"unknown environment {name!r}")


def make_ppo_config(env: str, agent: str, overrides: dict[str, Any] | None = None) -> PpoConfig:
    """Preset budget and fairness weights for ``agent``, then user overrides on top."""
    if agent not in PPO_AGENTS:
        raise ConfigError(f"{agent!r} is not a PPO agent")
    preset = PRESETS[env]
    kw: dict[str, Any] = dict(preset["budget"])
    kw["fairness_mode"] = _MODES[agent]
    reg: dict[str, Any] = {}
    if agent == "r_ppo":
        kw["penalty_weight"] = preset["r_ppo"]["penalty_weight"]
    elif agent == "a_ppo":
        reg.update(preset["a_ppo"]["regularizer"])
    overrides = dict(overrides or {})
    reg.update(overrides.pop("regularizer", {}))
    if "omega" in overrides:
        reg["omega"] = overrides.pop("omega")
    kw.update(overrides)
    if agent == "g_ppo":
        # no fairness pressure at all, whatever the overrides say; the
        # regulariser is never applied in greedy mode, so its weights stay zero
        kw["penalty_weight"] = 0.0
        reg.update(beta0=0.0, beta1=0.0, beta2=0.0)
    try:
        return PpoConfig(regularizer=RegularizerConfig(**reg), **kw)
    except TypeError as exc:
        raise ConfigError(f"bad [ppo] parameters: {exc}") from exc


def make_baseline(env: Env, agent: str, params: dict[str, Any] | None = None):
    params = dict(params or {})
    if agent == "purely_greedy":
        return baselines.PurelyGreedyAgent(env.cfg.sites, env.cfg.units, **params)
    if agent == "greedy_lend":
        return baselines.GreedyLender()
    if agent == "eo":
        return baselines.EoLender(**params)
    if agent == "random":
        return baselines.RandomVaccinator()
    if agent == "max_neighbor":
        return baselines.MaxNeighborVaccinator()
    raise ConfigError(f"no baseline {agent!r} for {env.name}")


# -- training --------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingArtifacts:
    checkpoint: Path
    log: Path


def run_training(config: ExperimentConfig, out_dir=None, seed: int | None = None,
                 progress=None) -> TrainingArtifacts:
    if not config.is_ppo:
        raise ConfigError(f"{config.agent!r} is a fixed baseline; there is nothing to train")
    seed = config.seed if seed is None else seed
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(config.env, config.env_params)
    ppo_cfg = make_ppo_config(config.env, config.agent, config.ppo)
    stem = f"{config.env}_{config.agent}_seed{seed}"
    log_path = out / f"{stem}_train.csv"
    result = train(env, ppo_cfg, seed=seed, log_path=log_path, progress=progress)
    meta = {
        "env": config.env,
        "env_params": config.env_params,
        "agent": config.agent,
        "seed": seed,
        "ppo": ppo_cfg.to_dict(),
    }
    ckpt = nn.save_checkpoint(out / f"{stem}.json", {"policy": result.policy, "value": result.value}, meta)
    return TrainingArtifacts(ckpt, log_path)


# -- evaluation ------------------------------------------------------------------

@dataclass
class MetricsSeries:
    """Per-trial time series, shaped ``(trials, horizon)``."""

    reward: np.ndarray
    delta: np.ndarray
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.reward = np.asarray(self.reward, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        self.extras = {k: np.asarray(v, dtype=float) for k, v in self.extras.items()}
        shapes = {self.reward.shape, self.delta.shape, *(v.shape for v in self.extras.values())}
        if len(shapes) != 1 or self.reward.ndim != 2:
            raise ValueError(f"inconsistent series shapes {shapes}")

    @property
    def trials(self) -> int:
        return self.reward.shape[0]

    @property
    def horizon(self) -> int:
        return self.reward.shape[1]

    def series(self) -> dict[str, np.ndarray]:
        return {"reward": self.reward, "delta": self.delta, **self.extras}

    def mean(self, name: str) -> np.ndarray:
        return self.series()[name].mean(axis=0)

    def std(self, name: str) -> np.ndarray:
        return self.series()[name].std(axis=0)

    def delta_summary(self) -> np.ndarray:
        """Mean violation over each trial's trajectory."""
        return self.delta.mean(axis=1)

    def cumulative_reward(self) -> np.ndarray:
        return self.reward.sum(axis=1)

    def aggregates(self) -> dict[str, dict[str, list[float]]]:
        return {k: {"mean": self.mean(k).tolist(), "std": self.std(k).tolist()} for k in self.series()}


def _load_policy(config: ExperimentConfig, checkpoint, env: Env) -> nn.MlpNetwork:
    nets, meta = nn.load_checkpoint(checkpoint)
    if meta.get("env") != config.env:
        raise ConfigError(f"checkpoint was trained on {meta.get('env')!r}, config asks for {config.env!r}")
    policy = nets.get("policy")
    if policy is None or policy.n_inputs != env.obs_dim or policy.n_outputs != env.n_actions:
        raise ConfigError("checkpoint policy does not fit this environment's observation/action sizes")
    return policy


class _PolicyAgent:
    def __init__(self, policy: nn.MlpNetwork, greedy: bool):
        self.policy = policy
        self.greedy = greedy
        self.obs = None

    def act(self, env, rng):
        probs, _ = nn.forward(self.policy, self.obs)
        action, _ = env.decode(probs, rng, greedy=self.greedy)
        return action

    def observe(self, env):
        pass


def _run_trial(args) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    config, policy, trial = args
    env = make_env(config.env, config.env_params)
    rng = np.random.default_rng(config.seed + trial)
    if policy is not None:
        agent = _PolicyAgent(policy, config.eval_mode == "argmax")
    else:
        agent = make_baseline(env, config.agent, config.baseline)
    obs = env.reset(rng)
    rewards, deltas = np.zeros(env.horizon), np.zeros(env.horizon)
    extras: dict[str, np.ndarray] = {}
    for t in range(env.horizon):
        if policy is not None:
            agent.obs = obs
        obs, reward, _ = env.step(agent.act(env, rng))
        agent.observe(env)
        rewards[t] = reward
        deltas[t] = env.delta()
        for k, v in env.extras().items():
            extras.setdefault(k, np.zeros(env.horizon))[t] = v
    return rewards, deltas, extras


def run_eval(config: ExperimentConfig, checkpoint=None) -> MetricsSeries:
    """Roll out ``config.trials`` episodes, trial i seeded with ``config.seed + i``.

    Δ and the extras are read after each step.  Trials may run in worker
    processes; results are merged in trial order so the output does not
    depend on ``workers``.
    """
    env = make_env(config.env, config.env_params)
    policy = None
    if config.is_ppo:
        if checkpoint is None:
            raise ConfigError(f"{config.agent} needs a checkpoint to evaluate")
        policy = _load_policy(config, checkpoint, env)
    elif checkpoint is not None:
        raise ConfigError(f"baseline {config.agent!r} does not take a checkpoint")
    jobs = [(config, policy, i) for i in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    keys = list(results[0][2])
    return MetricsSeries(
        np.stack([r[0] for r in results]),
        np.stack([r[1] for r in results]),
        {k: np.stack([r[2][k] for r in results]) for k in keys},
    )


# -- export ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def export_metrics(series: MetricsSeries, path, fmt: str = "csv") -> Path:
    """Write ``series`` as long-form CSV or structured JSON; floats are written exactly."""
    path = Path(path)
    try:
        if fmt == "csv":
            names = list(series.extras)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "trial", "reward", "delta", *names])
                for i in range(series.trials):
                    for t in range(series.horizon):
                        w.writerow([t, i, _fmt(series.reward[i, t]), _fmt(series.delta[i, t]),
                                    *(_fmt(series.extras[k][i, t]) for k in names)])
        elif fmt == "json":
            doc = {
                "trials": series.trials,
                "horizon": series.horizon,
                "series": {k: v.tolist() for k, v in series.series().items()},
                "aggregates": series.aggregates(),
                "delta_summary": series.delta_summary().tolist(),
            }
            path.write_text(json.dumps(doc))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


def read_metrics(path) -> MetricsSeries:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        s = {k: np.array(v, dtype=float) for k, v in doc["series"].items()}
        reward, delta = s.pop("reward"), s.pop("delta")
        return MetricsSeries(reward, delta, s)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    trials = 1 + max(int(r[1]) for r in body)
    horizon = 1 + max(int(r[0]) for r in body)
    data = np.zeros((len(header) - 2, trials, horizon))
    for r in body:
        data[:, int(r[1]), int(r[0])] = [float(x) for x in r[2:]]
    extras = {name: data[j + 2] for j, name in enumerate(header[4:])}
    return MetricsSeries(data[0], data[1], extras)
