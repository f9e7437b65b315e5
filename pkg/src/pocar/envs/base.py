"""Protocol shared by every environment the trainer and evaluator drive."""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np


class Env(ABC):
    """Stateful wrapper around a value-typed environment state.

    The policy head has ``n_actions`` outputs.  :meth:`decode` turns that
    probability vector into an environment action plus a ``counts`` vector
    over the head's categories; the log-probability of the action is
    ``counts @ log(probs)``, which covers single categorical choices (one-hot
    counts) and attention allocations (N draws) alike.
    """

    name: str = "env"
    obs_dim: int
    n_actions: int
    horizon: int

    @abstractmethod
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def step(self, action) -> tuple[np.ndarray, float, bool]:
        ...

    @abstractmethod
    def delta(self) -> float:
        """Fairness violation of the current state (smaller is fairer)."""

    def decode(self, probs: np.ndarray, rng: np.random.Generator, greedy: bool = False):
        k = int(np.argmax(probs)) if greedy else int(sample_categorical(probs, rng))
        counts = np.zeros(self.n_actions)
        counts[k] = 1.0
        return k, counts

    def extras(self) -> dict[str, float]:
        return {}


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; one uniform per call keeps RNG streams easy to audit."""
    c = np.cumsum(probs)
    k = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(k, len(probs) - 1)
