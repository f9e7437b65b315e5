from .attention import AttentionConfig, AttentionEnv, AttentionState
from .bandit import BanditEnv
from .base import Env
from .disease import DiseaseConfig, DiseaseEnv, DiseaseModel, HealthState
from .graph import SocialGraph, edge_betweenness, girvan_newman_bisect, karate_graph
from .lending import LendingConfig, LendingEnv, LendingState

__all__ = [
    "AttentionConfig", "AttentionEnv", "AttentionState",
    "BanditEnv", "Env",
    "DiseaseConfig", "DiseaseEnv", "DiseaseModel", "HealthState",
    "SocialGraph", "edge_betweenness", "girvan_newman_bisect", "karate_graph",
    "LendingConfig", "LendingEnv", "LendingState",
]
