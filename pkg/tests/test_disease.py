import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pocar.envs import disease as ds
from pocar.envs.disease import I, NO_VACCINE, R, S, DiseaseConfig, DiseaseEnv, DiseaseModel, HealthState
from pocar.envs.graph import SocialGraph, karate_graph


def star(n_leaves=4):
    edges = tuple((0, k) for k in range(1, n_leaves + 1))
    comms = np.array([0] + [1] * n_leaves)
    return SocialGraph(n_leaves + 1, edges, comms)


def state(status, n_comm=2):
    z = np.zeros(n_comm, dtype=np.int64)
    return HealthState(np.array(status, dtype=np.int8), z, z, 0)


def test_infection_probability_formula():
    assert ds.infection_probability(2, 0.5) == pytest.approx(0.75)
    assert ds.infection_probability(0, 0.5) == 0.0


def test_no_infection_no_action_is_fixed_point():
    model = DiseaseModel(karate_graph())
    s = state([S] * 34)
    nxt, reward = model.step(s, NO_VACCINE, np.random.default_rng(0))
    np.testing.assert_array_equal(nxt.status, s.status)
    assert reward == 1.0


def test_all_infected_reward_zero():
    model = DiseaseModel(karate_graph(), DiseaseConfig(rho=0.0))
    nxt, reward = model.step(state([I] * 34), NO_VACCINE, np.random.default_rng(0))
    assert reward == 0.0


def test_vaccination_immunises_susceptible_and_counts_anyway():
    model = DiseaseModel(star(), DiseaseConfig(tau=0.0, rho=0.0))
    s = state([S, S, I, S, S])
    nxt, _ = model.step(s, 0, np.random.default_rng(0))
    assert nxt.status[0] == R
    assert nxt.vaccinations.tolist() == [1, 0]
    again, _ = model.step(nxt, 2, np.random.default_rng(0))
    assert again.status[2] == I
    assert again.vaccinations.tolist() == [1, 1]


def test_out_of_range_node_rejected():
    model = DiseaseModel(star())
    with pytest.raises(IndexError):
        model.step(state([S] * 5), 5, np.random.default_rng(0))


def test_fairness_delta():
    z = np.zeros(2, dtype=np.int8)
    assert ds.fairness_delta(HealthState(z, np.zeros(2), np.zeros(2))) == 0.0
    s = HealthState(z, np.array([4, 1]), np.array([3, 4]))
    assert ds.fairness_delta(s) == pytest.approx(0.8)


def test_fairness_delta_three_communities_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(100):
        vacc = rng.integers(0, 10, 3)
        inf = rng.integers(0, 10, 3)
        s = HealthState(np.zeros(3, dtype=np.int8), vacc, inf)
        brute = max(abs(vacc[a] / (inf[a] + 1) - vacc[b] / (inf[b] + 1))
                    for a, b in itertools.permutations(range(3), 2))
        assert ds.fairness_delta(s) == pytest.approx(brute, abs=1e-12)


def test_observation_one_hot():
    s = state([S] * 34)
    obs = ds.observe(s)
    assert obs.shape == (102,)
    assert obs.sum() == 34
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(50):
        st_ = rng.integers(0, 3, 34)
        o = ds.observe(state(st_))
        assert o.sum() == 34
        seen.add((o.tobytes(), st_.tobytes()))
    assert len({a for a, _ in seen}) == len({b for _, b in seen})


def test_burn_in_and_seeding():
    env = DiseaseEnv()
    env.reset(np.random.default_rng(0))
    assert env.state.t == 0
    assert env.state.status[33] == I  # most connected node
    assert env.state.vaccinations.sum() == 0 and env.state.new_infections.sum() == 0
    fresh = env.model.fresh_state()
    assert np.count_nonzero(fresh.status == I) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_transitions_follow_sir_order(seed):
    env = DiseaseEnv(cfg=DiseaseConfig(rho=0.2))
    rng = np.random.default_rng(seed)
    env.reset(rng)
    allowed = {(S, S), (S, I), (S, R), (I, I), (I, R), (R, R)}
    for _ in range(20):
        before = env.state.status.copy()
        action = int(rng.integers(env.n_actions))
        env.step(env.to_env_action(action))
        after = env.state.status
        assert all((int(a), int(b)) in allowed for a, b in zip(before, after))
        assert np.count_nonzero(after == I) - np.count_nonzero(before == I) <= np.count_nonzero(before == S)
        assert np.all(env.state.vaccinations >= 0) and np.all(env.state.new_infections >= 0)


def test_tau_zero_never_infects_and_rho_one_recovers():
    model = DiseaseModel(karate_graph(), DiseaseConfig(tau=0.0, rho=1.0))
    s = state([I] + [S] * 33)
    nxt, _ = model.step(s, NO_VACCINE, np.random.default_rng(0))
    assert nxt.status[0] == R
    assert np.count_nonzero(nxt.status == I) == 0


def test_infection_frequency_matches_formula():
    # node 0 of a 4-star with three infected leaves: k = 3
    g = SocialGraph(4, ((0, 1), (0, 2), (0, 3)), np.array([0, 0, 1, 1]))
    model = DiseaseModel(g, DiseaseConfig(tau=0.3, rho=0.0))
    s = state([S, I, I, I])
    rng = np.random.default_rng(2)
    n = 10_000
    hits = sum(model.step(s, NO_VACCINE, rng)[0].status[0] == I for _ in range(n))
    p = 1 - 0.7 ** 3
    assert abs(hits / n - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_reward_depends_only_on_health():
    model = DiseaseModel(karate_graph())
    s = state([I] * 10 + [S] * 24)
    assert model.reward(s) == model.reward(s) == pytest.approx(24 / 34)


def test_recovery_uses_pre_step_infected():
    g = SocialGraph(2, ((0, 1),), np.array([0, 1]))
    model = DiseaseModel(g, DiseaseConfig(tau=1.0, rho=1.0))
    nxt, _ = model.step(state([I, S]), NO_VACCINE, np.random.default_rng(0))
    assert nxt.status.tolist() == [R, I]
    assert nxt.new_infections.tolist() == [0, 1]
