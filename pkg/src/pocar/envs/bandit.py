"""Two-armed bandit used for smoke tests and the convergence check."""
from __future__ import annotations

import numpy as np

from .base import Env


class BanditEnv(Env):
    name = "bandit"

    def __init__(self, payouts=(1.0, 0.0), horizon: int = 16):
        self.payouts = tuple(float(p) for p in payouts)
        self.obs_dim = 1
        self.n_actions = len(self.payouts)
        self.horizon = horizon
        self.t = 0
        self.rng = None

    def reset(self, rng):
        self.rng = rng
        self.t = 0
        return np.ones(1)

    def step(self, action):
        self.t += 1
        return np.ones(1), self.payouts[int(action)], self.t >= self.horizon

    def delta(self):
        return 0.0
