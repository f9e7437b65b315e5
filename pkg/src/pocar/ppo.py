"""PPO with fairness-aware advantage regularisation.

Three ways of treating the fairness violation ``delta`` are supported:

* ``greedy``: plain PPO, ``delta`` is only logged;
* ``reward_penalty``: rewards become ``r - weight * max(0, delta_t - omega)``;
* ``advantage_regularized``: advantages are rewritten per minibatch as

      beta0 * A + beta1 * min(0, omega - delta_t)
                + beta2 * [delta_t > omega] * min(0, delta_t - delta_next)

  so actions taken while the violation is above tolerance, or that fail to
  shrink it, look worse to the policy update.
"""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from . import nn
from .envs.base import Env

log = logging.getLogger(__name__)

LOG_FIELDS = ("iteration", "mean_reward", "mean_delta", "objective", "value_loss")


class FairnessMode(str, Enum):
    GREEDY = "greedy"
    REWARD_PENALTY = "reward_penalty"
    ADVANTAGE_REGULARIZED = "advantage_regularized"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class RegularizerConfig:
    beta0: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0
    omega: float = 0.05
    normalize: bool = False

    def __post_init__(self):
        if not all(math.isfinite(b) and b >= 0 for b in (self.beta0, self.beta1, self.beta2)):
            raise ValueError("beta weights must be finite and nonnegative")
        if not (math.isfinite(self.omega) and self.omega >= 0):
            raise ValueError("omega must be a nonnegative number")


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    clip_epsilon: float = 0.2
    policy_step: float = 3e-4
    value_step: float = 1e-3
    episodes_per_iteration: int = 8
    horizon: int | None = None  # None: run to the environment's own horizon
    iterations: int = 100
    update_epochs: int = 4
    minibatch_size: int = 256
    hidden_sizes: tuple[int, ...] = (64, 64)
    fairness_mode: FairnessMode = FairnessMode.GREEDY
    penalty_weight: float = 0.0
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    advantage_method: str = "returns"
    gae_lambda: float = 0.95
    standardize_advantages: bool = True
    entropy_coef: float = 0.0
    optimizer: str = "adam"
    max_grad_norm: float | None = 0.5
    logit_bound: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "fairness_mode", FairnessMode(self.fairness_mode))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.episodes_per_iteration < 1 or self.iterations < 0 or self.minibatch_size < 1:
            raise ValueError("episodes, iterations and minibatch size must be positive")
        if self.advantage_method not in ("returns", "gae"):
            raise ValueError(f"unknown advantage method {self.advantage_method!r}")

    @property
    def omega(self) -> float:
        # the reward penalty shares the regulariser's tolerance
        return self.regularizer.omega

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["fairness_mode"] = self.fairness_mode.value
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass(frozen=True)
class Transition:
    state_obs: np.ndarray
    action: Any
    counts: np.ndarray
    reward: float
    next_state_obs: np.ndarray
    log_prob_behavior: float
    delta_t: float
    delta_next: float
    terminal: bool


@dataclass
class RolloutBuffer:
    episodes: list[list[Transition]]
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None
    advantage_method: str | None = None

    def __len__(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def transitions(self) -> list[Transition]:
        return [tr for ep in self.episodes for tr in ep]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(tr, name) for tr in self.transitions()], dtype=float)

    def stacked(self, name: str) -> np.ndarray:
        return np.stack([getattr(tr, name) for tr in self.transitions()])


# -- rollouts ------------------------------------------------------------------

def episode_rng(seed, iteration: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(iteration), int(episode)])


def collect_rollouts(env: Env, policy: nn.MlpNetwork, config: PpoConfig, seed: int = 0,
                     iteration: int = 0, envs: list[Env] | None = None) -> RolloutBuffer:
    """Run ``episodes_per_iteration`` episodes side by side and record every step.

    The episodes are independent copies of ``env`` with their own generators;
    stepping them in lockstep only batches the policy evaluation.
    """
    n_ep = config.episodes_per_iteration
    if envs is None:
        envs = [copy.deepcopy(env) for _ in range(n_ep)]
    if policy.n_outputs != envs[0].n_actions or policy.n_inputs != envs[0].obs_dim:
        raise nn.ShapeError("policy does not match the environment's observation/action sizes")
    horizon = config.horizon or envs[0].horizon
    rngs = [episode_rng(seed, iteration, e) for e in range(n_ep)]
    obs = np.stack([e.reset(r) for e, r in zip(envs, rngs)])
    deltas = np.array([e.delta() for e in envs])
    episodes: list[list[Transition]] = [[] for _ in range(n_ep)]
    live = list(range(n_ep))
    for t in range(horizon):
        probs, cache = nn.forward(policy, obs[live])
        logp_all = nn.log_softmax(cache.logits)
        next_live = []
        for row, e in enumerate(live):
            env_e = envs[e]
            action, counts = env_e.decode(probs[row], rngs[e])
            try:
                next_obs, reward, done = env_e.step(action)
            except Exception as exc:
                raise RuntimeError(f"{env_e.name} step failed (iteration {iteration}, episode {e}, t={t})") from exc
            d_next = env_e.delta()
            done = done or t == horizon - 1
            episodes[e].append(Transition(
                obs[e].copy(), action, counts, float(reward), next_obs,
                float(counts @ logp_all[row]), float(deltas[e]), float(d_next), bool(done)))
            obs[e] = next_obs
            deltas[e] = d_next
            if not done:
                next_live.append(e)
        live = next_live
        if not live:
            break
    return RolloutBuffer(episodes)


def apply_reward_penalty(buffer: RolloutBuffer, weight: float, omega: float) -> RolloutBuffer:
    """``r_t - weight * max(0, delta_t - omega)`` on every transition."""
    eps = [[replace(tr, reward=tr.reward - weight * max(0.0, tr.delta_t - omega)) for tr in ep]
           for ep in buffer.episodes]
    return RolloutBuffer(eps)


# -- returns and advantages ------------------------------------------------------

def compute_returns(buffer: RolloutBuffer, gamma: float) -> RolloutBuffer:
    """Discounted reward-to-go inside each episode; nothing crosses an episode end."""
    out = []
    for ep in buffer.episodes:
        g = np.zeros(len(ep))
        acc = 0.0
        for t in range(len(ep) - 1, -1, -1):
            acc = ep[t].reward + gamma * acc
            g[t] = acc
        out.append(g)
    buffer.returns = np.concatenate(out) if out else np.zeros(0)
    return buffer


def value_of(value_net: nn.MlpNetwork, obs: np.ndarray) -> np.ndarray:
    if len(obs) == 0:
        return np.zeros(0)
    v, _ = nn.forward(value_net, obs)
    return v[:, 0]


def estimate_advantage(buffer: RolloutBuffer, value_net: nn.MlpNetwork, method: str = "returns",
                       gamma: float = 0.99, lam: float = 0.95) -> RolloutBuffer:
    """``G - V(s)`` by default; ``method="gae"`` gives GAE(lambda) with no bootstrap past episode ends."""
    if buffer.returns is None:
        raise ValueError("compute_returns must run before estimate_advantage")
    v = value_of(value_net, buffer.stacked("state_obs"))
    if method == "returns":
        adv = buffer.returns - v
    elif method == "gae":
        adv = np.zeros_like(v)
        start = 0
        for ep in buffer.episodes:
            n = len(ep)
            vals = v[start:start + n]
            acc = 0.0
            for t in range(n - 1, -1, -1):
                v_next = vals[t + 1] if t + 1 < n else 0.0
                td = ep[t].reward + gamma * v_next - vals[t]
                acc = td + gamma * lam * acc
                adv[start + t] = acc
            start += n
    else:
        raise ValueError(f"unknown advantage method {method!r}")
    buffer.advantages = adv
    buffer.advantage_method = method
    return buffer


def regularize_advantage(adv: float, delta_t: float, delta_next: float, cfg: RegularizerConfig) -> float:
    """Single-sample regularised advantage (no normalisation)."""
    threshold_term = min(0.0, -delta_t + cfg.omega)
    decrease_term = min(0.0, delta_t - delta_next) if delta_t > cfg.omega else 0.0
    return cfg.beta0 * adv + cfg.beta1 * threshold_term + cfg.beta2 * decrease_term


def minmax(x: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant batch maps to all zeros."""
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def standardize(x: np.ndarray) -> np.ndarray:
    if x.size < 2:
        return x - x.mean()
    return (x - x.mean()) / (x.std() + 1e-8)


def regularize_advantages(adv, delta_t, delta_next, cfg: RegularizerConfig,
                          standardize_adv: bool = False) -> np.ndarray:
    """Batch version; with ``cfg.normalize`` every term is min-max scaled before weighting."""
    adv = np.asarray(adv, dtype=float)
    dt = np.asarray(delta_t, dtype=float)
    dn = np.asarray(delta_next, dtype=float)
    threshold_term = np.minimum(0.0, cfg.omega - dt)
    decrease_term = np.where(dt > cfg.omega, np.minimum(0.0, dt - dn), 0.0)
    if cfg.normalize:
        adv, threshold_term, decrease_term = minmax(adv), minmax(threshold_term), minmax(decrease_term)
    elif standardize_adv:
        adv = standardize(adv)
    return cfg.beta0 * adv + cfg.beta1 * threshold_term + cfg.beta2 * decrease_term


# -- losses --------------------------------------------------------------------

@dataclass(frozen=True)
class ClipStats:
    objective: float
    clip_fraction: float
    skipped: int
    mean_abs_logit: float


def ppo_clip_loss(policy: nn.MlpNetwork, obs, counts, logp_old, advantages, epsilon: float,
                  entropy_coef: float = 0.0) -> tuple[float, nn.GradientSet, ClipStats]:
    """Clipped surrogate ``mean(min(R A, clip(R, 1-eps, 1+eps) A))`` and its ascent gradient.

    ``counts`` encodes each action over the policy's categories, so
    ``log pi(a|s) = counts @ log_softmax(logits)``.
    """
    obs = np.asarray(obs, dtype=float)
    counts = np.asarray(counts, dtype=float)
    adv = np.asarray(advantages, dtype=float)
    probs, cache = nn.forward(policy, obs)
    logp = (counts * nn.log_softmax(cache.logits)).sum(axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp - np.asarray(logp_old, dtype=float))
    ok = np.isfinite(ratio)
    skipped = int((~ok).sum())
    if skipped:
        log.warning("skipping %d transitions with non-finite probability ratio", skipped)
    ratio = np.where(ok, ratio, 1.0)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    surrogate = np.minimum(ratio * adv, clipped * adv)
    n = max(int(ok.sum()), 1)
    objective = float(surrogate[ok].sum() / n)
    # gradient flows only where the unclipped branch is the active minimum
    active = ok & (ratio * adv <= clipped * adv)
    n_draws = counts.sum(axis=1, keepdims=True)
    dlogp = counts - n_draws * probs
    g_logits = (active * adv * ratio)[:, None] * dlogp / n
    if entropy_coef:
        logp_all = nn.log_softmax(cache.logits)
        ent = -(probs * logp_all).sum(axis=1, keepdims=True)
        g_logits = g_logits + entropy_coef * (-probs * (logp_all + ent)) * ok[:, None] / n
    grads = nn.backward(policy, cache, g_logits, wrt_logits=True)
    stats = ClipStats(objective, float(((ratio != clipped) & ok).mean()), skipped,
                      float(np.abs(cache.logits).mean()))
    return objective, grads, stats


def value_loss(value_net: nn.MlpNetwork, obs, returns) -> tuple[float, nn.GradientSet]:
    """Mean squared error against the returns and its gradient (descend it)."""
    v, cache = nn.forward(value_net, np.asarray(obs, dtype=float))
    err = v[:, 0] - np.asarray(returns, dtype=float)
    loss = float(np.mean(err * err))
    grads = nn.backward(value_net, cache, (2.0 * err / err.size)[:, None])
    return loss, grads


# -- training ------------------------------------------------------------------

@dataclass
class TrainResult:
    policy: nn.MlpNetwork
    value: nn.MlpNetwork
    log: list[dict[str, float]]
    config: PpoConfig


def init_networks(env: Env, config: PpoConfig, seed: int) -> tuple[nn.MlpNetwork, nn.MlpNetwork]:
    hidden = list(config.hidden_sizes)
    policy = nn.init_network([env.obs_dim, *hidden, env.n_actions], nn.Head.SOFTMAX, [seed, 0])
    value = nn.init_network([env.obs_dim, *hidden, 1], nn.Head.VALUE, [seed, 1])
    return policy, value


def minibatch_advantages(buffer_adv, dt, dn, config: PpoConfig) -> np.ndarray:
    if config.fairness_mode is FairnessMode.ADVANTAGE_REGULARIZED:
        return regularize_advantages(buffer_adv, dt, dn, config.regularizer, config.standardize_advantages)
    return standardize(buffer_adv) if config.standardize_advantages else buffer_adv


def train(env: Env, config: PpoConfig, seed: int = 0, log_path=None, progress=None) -> TrainResult:
    """Outer loop: collect, score, then several epochs of clipped policy and value updates."""
    policy, value = init_networks(env, config, seed)
    pol_opt = nn.make_optimizer(config.optimizer, policy, config.policy_step, config.max_grad_norm)
    val_opt = nn.make_optimizer(config.optimizer, value, config.value_step, config.max_grad_norm)
    shuffle_rng = np.random.default_rng([int(seed), 2**31 - 1])
    envs = [copy.deepcopy(env) for _ in range(config.episodes_per_iteration)]
    history: list[dict[str, float]] = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
    try:
        for k in range(config.iterations):
            raw = collect_rollouts(env, policy, config, seed, k, envs=envs)
            buf = raw
            if config.fairness_mode is FairnessMode.REWARD_PENALTY:
                buf = apply_reward_penalty(raw, config.penalty_weight, config.omega)
            compute_returns(buf, config.gamma)
            estimate_advantage(buf, value, config.advantage_method, config.gamma, config.gae_lambda)

            obs = buf.stacked("state_obs")
            counts = buf.stacked("counts")
            logp_old = buf.column("log_prob_behavior")
            dt = buf.column("delta_t")
            dn = buf.column("delta_next")
            n = len(obs)
            mb = min(config.minibatch_size, n)
            objectives, vlosses = [], []
            for _ in range(config.update_epochs):
                order = shuffle_rng.permutation(n)
                for start in range(0, n - mb + 1, mb):
                    idx = order[start:start + mb]
                    adv = minibatch_advantages(buf.advantages[idx], dt[idx], dn[idx], config)
                    obj, g_pol, stats = ppo_clip_loss(policy, obs[idx], counts[idx], logp_old[idx], adv,
                                                      config.clip_epsilon, config.entropy_coef)
                    if stats.mean_abs_logit > config.logit_bound:
                        raise TrainingDiverged(
                            f"iteration {k}: mean |logit| {stats.mean_abs_logit:.3g} exceeds {config.logit_bound}")
                    policy = pol_opt.step(policy, g_pol)
                    vl, g_val = value_loss(value, obs[idx], buf.returns[idx])
                    value = val_opt.step(value, -g_val)
                    objectives.append(obj)
                    vlosses.append(vl)
            row = {
                "iteration": k,
                "mean_reward": float(raw.column("reward").mean()),
                "mean_delta": float(dt.mean()),
                "objective": float(np.mean(objectives)) if objectives else 0.0,
                "value_loss": float(np.mean(vlosses)) if vlosses else 0.0,
            }
            history.append(row)
            if writer is not None:
                writer.writerow([k] + [repr(row[f]) for f in LOG_FIELDS[1:]])
            if progress is not None:
                progress(row)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(policy, value, history, config)


def write_log(rows: list[dict[str, float]], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_FIELDS)
        for row in rows:
            w.writerow([row["iteration"]] + [repr(row[f]) for f in LOG_FIELDS[1:]])
    return path
