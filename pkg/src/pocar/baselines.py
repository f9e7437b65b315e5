"""Hand-designed comparison policies for the three environments."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import pdtrc

from .envs.disease import S, HealthState
from .envs.graph import SocialGraph


# -- attention ---------------------------------------------------------------

@dataclass
class RateEstimator:
    """Exponentially smoothed incident-rate estimates per site.

    Estimates are fed the *discovered* counts, so a neglected site looks
    quiet and stays neglected; that censoring feedback is what makes the
    greedy allocator unstable when sites outnumber attention units.
    """

    estimates: np.ndarray
    smoothing: float = 0.3

    @classmethod
    def uniform(cls, sites: int, initial: float = 1.0, smoothing: float = 0.3) -> RateEstimator:
        return cls(np.full(sites, float(initial)), smoothing)

    def update(self, discovered) -> None:
        s = self.smoothing
        self.estimates = (1.0 - s) * self.estimates + s * np.asarray(discovered, dtype=float)


def purely_greedy_allocate(estimates, units: int) -> np.ndarray:
    """Give each unit to the site most likely to have one more incident than it is covering.

    Unit j goes to ``argmax_k P(Y_k >= a_k + 1)`` with ``Y_k ~ Poisson(est_k)``;
    ties go to the lowest site index.
    """
    lam = np.maximum(np.asarray(estimates, dtype=float), 0.0)
    alloc = np.zeros(lam.shape[0], dtype=np.int64)
    for _ in range(units):
        # pdtrc(k, m) = P(Y > k)
        k = int(np.argmax(pdtrc(alloc, lam)))
        alloc[k] += 1
    return alloc


# -- lending -----------------------------------------------------------------

ACCEPT, REJECT = 1, 0


def expected_profit(eta, loan_amount: float, interest_rate: float):
    eta = np.asarray(eta, dtype=float)
    return eta * loan_amount * interest_rate - (1.0 - eta) * loan_amount


def greedy_lend(credit_score: int, eta, loan_amount: float, interest_rate: float) -> int:
    """Accept exactly when the loan has strictly positive expected profit.

    Profits within rounding noise of zero (eta = 1/(1+interest)) count as zero.
    """
    p = expected_profit(np.asarray(eta)[credit_score - 1], loan_amount, interest_rate)
    return ACCEPT if p > 1e-12 * loan_amount else REJECT


@dataclass(frozen=True)
class EoThresholds:
    """Per-group minimum accepted score; ``c_max + 1`` accepts nobody."""

    thresholds: tuple[int, int]
    tpr_gap: float
    profit: float

    def decide(self, credit_score: int, group: int) -> int:
        return ACCEPT if credit_score >= self.thresholds[group - 1] else REJECT


def threshold_stats(dist, eta, threshold: int, unit_profit) -> tuple[float, float]:
    """Expected TPR and expected per-applicant profit of accepting scores >= threshold."""
    dist = np.asarray(dist, dtype=float)
    eta = np.asarray(eta, dtype=float)
    repay_mass = dist * eta
    accepted = np.arange(1, dist.shape[0] + 1) >= threshold
    total = repay_mass.sum()
    tpr = repay_mass[accepted].sum() / total if total > 0 else 0.0
    return float(tpr), float((dist * unit_profit)[accepted].sum())


def eo_thresholds(distributions, eta, loan_amount: float, interest_rate: float,
                  tolerance: float = 0.02) -> EoThresholds:
    """Most profitable threshold pair whose expected TPRs differ by at most ``tolerance``.

    Groups arrive with equal probability, so profit is the average of the two
    groups' per-applicant expectations.  With no feasible pair the smallest
    gap wins.
    """
    dists = np.asarray(distributions, dtype=float)
    c_max = dists.shape[1]
    unit = expected_profit(eta, loan_amount, interest_rate)
    stats = [[threshold_stats(dists[g], eta, t, unit) for t in range(1, c_max + 2)] for g in range(2)]
    best, fallback = None, None
    for t1, t2 in product(range(1, c_max + 2), repeat=2):
        (r1, p1), (r2, p2) = stats[0][t1 - 1], stats[1][t2 - 1]
        cand = EoThresholds((t1, t2), abs(r1 - r2), 0.5 * (p1 + p2))
        if cand.tpr_gap <= tolerance and (best is None or cand.profit > best.profit):
            best = cand
        if fallback is None or cand.tpr_gap < fallback.tpr_gap:
            fallback = cand
    return best if best is not None else fallback


# -- disease -----------------------------------------------------------------

def random_vaccinate(state: HealthState, rng: np.random.Generator) -> int:
    susceptible = np.flatnonzero(state.status == S)
    pool = susceptible if susceptible.size else np.arange(state.status.shape[0])
    return int(pool[rng.integers(pool.size)])


def max_neighbor_vaccinate(state: HealthState, graph: SocialGraph) -> int:
    deg = graph.degrees()
    susceptible = state.status == S
    if susceptible.any():
        return int(np.argmax(np.where(susceptible, deg, -1)))
    return int(np.argmax(deg))


# -- agents --------------------------------------------------------------------
# Uniform callable surface used by the evaluator: act(env, rng) -> env action,
# observe(env) after each step for agents that learn online.

@dataclass
class PurelyGreedyAgent:
    sites: int
    units: int
    estimator: RateEstimator = field(init=False)

    def __post_init__(self):
        self.estimator = RateEstimator.uniform(self.sites)

    def act(self, env, rng):
        return purely_greedy_allocate(self.estimator.estimates, self.units)

    def observe(self, env):
        self.estimator.update(env.state.last_discovered)


@dataclass
class GreedyLender:
    def act(self, env, rng):
        cfg = env.cfg
        return greedy_lend(env.state.applicant.credit_score, cfg.eta_table(), cfg.loan_amount, cfg.interest_rate)

    def observe(self, env):
        pass


@dataclass
class EoLender:
    tolerance: float = 0.02

    def act(self, env, rng):
        cfg, s = env.cfg, env.state
        th = eo_thresholds(s.distributions, cfg.eta_table(), cfg.loan_amount, cfg.interest_rate, self.tolerance)
        return th.decide(s.applicant.credit_score, s.applicant.group)

    def observe(self, env):
        pass


@dataclass
class RandomVaccinator:
    def act(self, env, rng):
        return random_vaccinate(env.state, rng)

    def observe(self, env):
        pass


@dataclass
class MaxNeighborVaccinator:
    def act(self, env, rng):
        return max_neighbor_vaccinate(env.state, env.graph)

    def observe(self, env):
        pass
