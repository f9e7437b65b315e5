"""Credit approval with two applicant groups.

The bank sees one applicant per step and accepts or rejects.  Accepted loans
repay with probability eta(C); outcomes nudge the applicant's group score
distribution up (repay) or down (default).  Rejections still reveal whether
the applicant would have repaid, which is what the TPR bookkeeping needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Env

REJECT, ACCEPT = 0, 1


def default_eta(c_max: int) -> np.ndarray:
    c = np.arange(1, c_max + 1)
    return 0.1 + 0.8 * (c - 1) / (c_max - 1)


def triangular(c_max: int, peak: int, width: int | None = None) -> np.ndarray:
    width = width or (c_max + 1) // 2
    c = np.arange(1, c_max + 1)
    w = np.maximum(0.0, width - np.abs(c - peak))
    return w / w.sum()


@dataclass(frozen=True)
class LendingConfig:
    c_max: int = 7
    eta: tuple[float, ...] | None = None
    group_distributions: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    loan_amount: float = 1.0
    interest_rate: float = 0.3
    zeta0: float = 1.0
    horizon: int = 400
    shift: float | None = None
    initial_cash: float = 0.0

    def __post_init__(self):
        if self.c_max < 2:
            raise ValueError("c_max must be at least 2")
        eta = self.eta_table()
        if eta.shape != (self.c_max,) or np.any(np.diff(eta) < 0) or np.any((eta < 0) | (eta > 1)):
            raise ValueError("eta must be a non-decreasing table in [0, 1] with c_max entries")

    def eta_table(self) -> np.ndarray:
        if self.eta is None:
            return default_eta(self.c_max)
        return np.asarray(self.eta, dtype=float)

    def initial_distributions(self) -> np.ndarray:
        if self.group_distributions is None:
            # group 2 peaks two buckets below group 1 (5 and 3 when c_max = 7)
            hi = (self.c_max + 3) // 2
            lo = max(1, hi - 2)
            return np.stack([triangular(self.c_max, hi), triangular(self.c_max, lo)])
        d = np.asarray(self.group_distributions, dtype=float)
        if d.shape != (2, self.c_max) or np.any(d < 0):
            raise ValueError("group_distributions must be two nonnegative vectors of length c_max")
        return d / d.sum(axis=1, keepdims=True)

    @property
    def shift_mass(self) -> float:
        return self.shift if self.shift is not None else 1.0 / self.horizon


@dataclass(frozen=True)
class Applicant:
    credit_score: int
    group: int  # 1 or 2

    @property
    def g(self) -> int:
        return self.group - 1


@dataclass(frozen=True)
class Outcome:
    accepted: bool
    would_repay: bool
    applicant: Applicant


@dataclass(frozen=True)
class LendingState:
    bank_cash: float
    distributions: np.ndarray  # (2, c_max)
    tp: np.ndarray
    fn: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    applicant: Applicant
    t: int = 0

    @property
    def loans(self) -> np.ndarray:
        return self.tp + self.fp


def sample_applicant(dists: np.ndarray, rng: np.random.Generator) -> Applicant:
    g = int(rng.integers(2))
    c = np.cumsum(dists[g])
    score = min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), len(c) - 1) + 1
    return Applicant(score, g + 1)


def initial_state(cfg: LendingConfig, rng: np.random.Generator) -> LendingState:
    d = cfg.initial_distributions()
    z = np.zeros(2, dtype=np.int64)
    return LendingState(cfg.initial_cash, d, z, z, z, z, sample_applicant(d, rng), 0)


def shift_mass(dist: np.ndarray, score: int, direction: int, amount: float) -> np.ndarray:
    """Move up to ``amount`` of bucket ``score`` one bucket up or down (saturating)."""
    i = score - 1
    j = min(max(i + direction, 0), len(dist) - 1)
    if i == j:
        return dist
    moved = min(amount, dist[i])
    out = dist.copy()
    out[i] -= moved
    out[j] += moved
    return out


def step(state: LendingState, decision, cfg: LendingConfig, rng: np.random.Generator):
    """Apply an accept/reject decision; returns ``(next_state, reward, outcome)``."""
    accept = bool(decision)
    app = state.applicant
    g = app.g
    repay = bool(rng.random() < cfg.eta_table()[app.credit_score - 1])
    tp, fn, fp, tn = state.tp.copy(), state.fn.copy(), state.fp.copy(), state.tn.copy()
    cash = state.bank_cash
    dists = state.distributions
    if accept:
        if repay:
            cash = cash + cfg.loan_amount * cfg.interest_rate
            tp[g] += 1
        else:
            cash = cash - cfg.loan_amount
            fp[g] += 1
        dists = dists.copy()
        dists[g] = shift_mass(dists[g], app.credit_score, 1 if repay else -1, cfg.shift_mass)
    elif repay:
        fn[g] += 1
    else:
        tn[g] += 1
    nxt = LendingState(cash, dists, tp, fn, fp, tn, sample_applicant(dists, rng), state.t + 1)
    reward = cfg.zeta0 * (nxt.bank_cash - state.bank_cash)
    return nxt, float(reward), Outcome(accept, repay, app)


def tpr(tp, fn) -> np.ndarray:
    tp = np.asarray(tp, dtype=float)
    denom = tp + np.asarray(fn, dtype=float)
    return np.divide(tp, denom, out=np.zeros_like(tp), where=denom > 0)


def fairness_delta(state: LendingState) -> float:
    r = tpr(state.tp, state.fn)
    return float(r.max() - r.min())


def observe(state: LendingState, cfg: LendingConfig) -> np.ndarray:
    obs = np.zeros(cfg.c_max + 2)
    obs[state.applicant.credit_score - 1] = 1.0
    obs[cfg.c_max + state.applicant.g] = 1.0
    return obs


class LendingEnv(Env):
    name = "lending"

    def __init__(self, cfg: LendingConfig | None = None):
        self.cfg = cfg or LendingConfig()
        self.obs_dim = self.cfg.c_max + 2
        self.n_actions = 2
        self.horizon = self.cfg.horizon
        self.rng = None
        self.state = None

    def reset(self, rng):
        self.rng = rng
        self.state = initial_state(self.cfg, rng)
        return observe(self.state, self.cfg)

    def step(self, action):
        self.state, reward, _ = step(self.state, action, self.cfg, self.rng)
        return observe(self.state, self.cfg), reward, self.state.t >= self.horizon

    def delta(self):
        return fairness_delta(self.state)

    def extras(self):
        s = self.state
        return {
            "bank_cash": float(s.bank_cash),
            "loans_g1": float(s.loans[0]),
            "loans_g2": float(s.loans[1]),
            "tp_g1": float(s.tp[0]),
            "tp_g2": float(s.tp[1]),
            "fn_g1": float(s.fn[0]),
            "fn_g2": float(s.fn[1]),
        }
