"""Attention allocation for incident monitoring.

K sites each produce Poisson(R_k) incidents per step.  An allocation of N
attention units discovers ``min(a_k, y_k)`` incidents per site; attended sites
cool down by ``d * a_k`` and neglected sites heat up by ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Env


@dataclass(frozen=True)
class AttentionConfig:
    sites: int = 5
    units: int = 6
    drift: float = 0.1
    zeta0: float = 1.0
    zeta1: float = 0.25
    initial_rates: tuple[float, ...] | None = None
    horizon: int = 200
    observe_occurred: bool = False

    def __post_init__(self):
        if self.sites < 2 or self.units < 1 or self.drift <= 0:
            raise ValueError("need sites >= 2, units >= 1 and drift > 0")
        if self.initial_rates is not None and len(self.initial_rates) != self.sites:
            raise ValueError("initial_rates must have one entry per site")

    def rates0(self) -> np.ndarray:
        if self.initial_rates is None:
            return np.linspace(1.5, 3.5, self.sites)
        return np.asarray(self.initial_rates, dtype=float)


@dataclass(frozen=True)
class AttentionState:
    rates: np.ndarray
    cum_discovered: np.ndarray
    cum_occurred: np.ndarray
    last_allocation: np.ndarray
    last_incidents: np.ndarray
    last_discovered: np.ndarray
    t: int = 0


def initial_state(cfg: AttentionConfig) -> AttentionState:
    k = cfg.sites
    zeros = np.zeros(k, dtype=np.int64)
    return AttentionState(cfg.rates0().copy(), zeros, zeros, zeros, zeros, zeros, 0)


def check_allocation(allocation, cfg: AttentionConfig) -> np.ndarray:
    a = np.asarray(allocation)
    if a.shape != (cfg.sites,) or np.any(a < 0) or np.any(a != np.round(a)) or a.sum() != cfg.units:
        raise ValueError(f"allocation {allocation!r} must be {cfg.sites} nonnegative integers summing to {cfg.units}")
    return a.astype(np.int64)


def next_rates(rates: np.ndarray, allocation: np.ndarray, drift: float) -> np.ndarray:
    # clamped at zero so the Poisson rate stays valid
    return np.where(allocation == 0, rates + drift, np.maximum(0.0, rates - drift * allocation))


def step(state: AttentionState, allocation, cfg: AttentionConfig, rng: np.random.Generator):
    """Advance one step; returns ``(next_state, reward, occurred, discovered)``."""
    a = check_allocation(allocation, cfg)
    y = rng.poisson(state.rates)
    found = np.minimum(a, y)
    reward = cfg.zeta0 * found.sum() - cfg.zeta1 * (y - found).sum()
    nxt = AttentionState(
        rates=next_rates(state.rates, a, cfg.drift),
        cum_discovered=state.cum_discovered + found,
        cum_occurred=state.cum_occurred + y,
        last_allocation=a,
        last_incidents=y,
        last_discovered=found,
        t=state.t + 1,
    )
    return nxt, float(reward), y, found


def ratio_gap(numerators, denominators) -> float:
    """Largest pairwise gap of ``num / (den + 1)`` across groups."""
    r = np.asarray(numerators, dtype=float) / (np.asarray(denominators, dtype=float) + 1.0)
    return float(r.max() - r.min())


def fairness_delta(state: AttentionState) -> float:
    return ratio_gap(state.cum_discovered, state.cum_occurred)


def observe(state: AttentionState, cfg: AttentionConfig) -> np.ndarray:
    n = float(cfg.units)
    incidents = state.last_incidents if cfg.observe_occurred else state.last_discovered
    ratios = state.cum_discovered / (state.cum_occurred + 1.0)
    return np.concatenate([state.last_allocation / n, incidents / n, ratios])


def decode_action(probs, units: int, rng: np.random.Generator) -> np.ndarray:
    """N independent categorical draws, returned as per-site counts."""
    p = np.asarray(probs, dtype=float)
    return rng.multinomial(units, p / p.sum())


def largest_remainder(probs, units: int) -> np.ndarray:
    """Deterministic allocation closest to ``units * probs``."""
    target = np.asarray(probs, dtype=float) * units
    base = np.floor(target).astype(np.int64)
    order = np.argsort(-(target - base), kind="stable")
    base[order[: units - base.sum()]] += 1
    return base


class AttentionEnv(Env):
    name = "attention"

    def __init__(self, cfg: AttentionConfig | None = None):
        self.cfg = cfg or AttentionConfig()
        self.obs_dim = 3 * self.cfg.sites
        self.n_actions = self.cfg.sites
        self.horizon = self.cfg.horizon
        self.state = initial_state(self.cfg)
        self.rng = None

    def reset(self, rng):
        self.rng = rng
        self.state = initial_state(self.cfg)
        return observe(self.state, self.cfg)

    def step(self, action):
        self.state, reward, _, _ = step(self.state, action, self.cfg, self.rng)
        return observe(self.state, self.cfg), reward, self.state.t >= self.horizon

    def delta(self):
        return fairness_delta(self.state)

    def decode(self, probs, rng, greedy=False):
        if greedy:
            alloc = largest_remainder(probs, self.cfg.units)
        else:
            alloc = decode_action(probs, self.cfg.units, rng)
        return alloc, alloc.astype(float)

    def extras(self):
        s = self.state
        out = {"mean_rate": float(s.rates.mean())}
        for k in range(self.cfg.sites):
            out[f"rate_{k}"] = float(s.rates[k])
        for k in range(self.cfg.sites):
            out[f"discovered_{k}"] = float(s.cum_discovered[k])
        for k in range(self.cfg.sites):
            out[f"occurred_{k}"] = float(s.cum_occurred[k])
        return out
