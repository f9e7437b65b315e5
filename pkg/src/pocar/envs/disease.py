"""Precision disease control: SIR spread on a social network with one vaccine per step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import ratio_gap
from .base import Env
from .graph import SocialGraph, karate_graph

S, I, R = 0, 1, 2
NO_VACCINE = None


@dataclass(frozen=True)
class DiseaseConfig:
    tau: float = 0.5
    rho: float = 0.005
    zeta0: float = 1.0
    horizon: int = 20
    burn_in: int = 1
    initial_infected: int | str = "max_degree"

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0 and 0.0 <= self.rho <= 1.0):
            raise ValueError("tau and rho must be probabilities")


@dataclass(frozen=True)
class HealthState:
    status: np.ndarray  # int8 per node: S, I or R
    vaccinations: np.ndarray  # per community
    new_infections: np.ndarray  # per community
    t: int = 0


def seed_node(graph: SocialGraph, rule) -> int:
    if rule == "max_degree":
        return int(np.argmax(graph.degrees()))  # argmax keeps the lowest index on ties
    return int(rule)


def infection_probability(n_infected_neighbors, tau: float):
    return 1.0 - (1.0 - tau) ** np.asarray(n_infected_neighbors)


class DiseaseModel:
    """Graph-bound transition function; holds only immutable lookup tables."""

    def __init__(self, graph: SocialGraph, cfg: DiseaseConfig | None = None):
        self.graph = graph
        self.cfg = cfg or DiseaseConfig()
        self.adj = graph.adjacency_matrix()
        self.n = graph.n
        self.n_comm = graph.n_communities
        self.communities = graph.communities

    def fresh_state(self) -> HealthState:
        status = np.zeros(self.n, dtype=np.int8)
        status[seed_node(self.graph, self.cfg.initial_infected)] = I
        z = np.zeros(self.n_comm, dtype=np.int64)
        return HealthState(status, z, z, 0)

    def initial_state(self, rng: np.random.Generator) -> HealthState:
        """Seed one infection, then let it spread freely for the burn-in steps."""
        state = self.fresh_state()
        for _ in range(self.cfg.burn_in):
            state, _ = self.step(state, NO_VACCINE, rng, record=False)
        return HealthState(state.status, state.vaccinations, state.new_infections, 0)

    def step(self, state: HealthState, action, rng: np.random.Generator, record: bool = True):
        """Vaccinate, then infect, then recover; returns ``(next_state, reward)``."""
        status = state.status.copy()
        vacc = state.vaccinations.copy()
        if action is not NO_VACCINE:
            v = int(action)
            if not 0 <= v < self.n:
                raise IndexError(f"node {action} out of range for {self.n} nodes")
            if status[v] == S:
                status[v] = R
            if record:
                vacc[self.communities[v]] += 1
        infected = state.status == I
        pressure = self.adj @ infected
        p_inf = infection_probability(pressure, self.cfg.tau)
        u_inf = rng.random(self.n)
        u_rec = rng.random(self.n)
        newly = (status == S) & (u_inf < p_inf)
        recovered = infected & (u_rec < self.cfg.rho)
        status[newly] = I
        status[recovered] = R
        new_inf = state.new_infections
        if record:
            new_inf = new_inf + np.bincount(self.communities[newly], minlength=self.n_comm)
        nxt = HealthState(status, vacc, new_inf, state.t + 1)
        return nxt, self.reward(nxt)

    def reward(self, state: HealthState) -> float:
        return self.cfg.zeta0 * float(np.count_nonzero(state.status != I)) / self.n


def fairness_delta(state: HealthState) -> float:
    return ratio_gap(state.vaccinations, state.new_infections)


def observe(state: HealthState) -> np.ndarray:
    n = state.status.shape[0]
    obs = np.zeros((n, 3))
    obs[np.arange(n), state.status] = 1.0
    return obs.ravel()


class DiseaseEnv(Env):
    name = "disease"

    def __init__(self, graph: SocialGraph | None = None, cfg: DiseaseConfig | None = None):
        self.model = DiseaseModel(graph or karate_graph(), cfg)
        self.cfg = self.model.cfg
        self.graph = self.model.graph
        self.obs_dim = 3 * self.model.n
        self.n_actions = self.model.n + 1  # last index means "vaccinate nobody"
        self.horizon = self.cfg.horizon
        self.rng = None
        self.state = self.model.fresh_state()

    def reset(self, rng):
        self.rng = rng
        self.state = self.model.initial_state(rng)
        return observe(self.state)

    def to_env_action(self, index: int):
        return NO_VACCINE if index == self.model.n else index

    def step(self, action):
        self.state, reward = self.model.step(self.state, action, self.rng)
        return observe(self.state), reward, self.state.t >= self.horizon

    def delta(self):
        return fairness_delta(self.state)

    def decode(self, probs, rng, greedy=False):
        k, counts = super().decode(probs, rng, greedy)
        return self.to_env_action(k), counts

    def extras(self):
        s = self.state
        out = {"frac_infected": float(np.count_nonzero(s.status == I)) / self.model.n}
        for c in range(self.model.n_comm):
            out[f"vaccinations_{c + 1}"] = float(s.vaccinations[c])
        for c in range(self.model.n_comm):
            out[f"new_infections_{c + 1}"] = float(s.new_infections[c])
        return out
