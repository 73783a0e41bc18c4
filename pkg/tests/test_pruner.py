"""Joint-action sampling and best-response dynamics."""

from collections import Counter

import numpy as np
import pytest
from scipy import stats

from conftest import is_pure_nash, pure_nash_set, random_potential_game, table_game
from siclop.env import AgentAction, generate_scenario
from siclop.errors import NoConvergence
from siclop.pruner import (
    CandidateSet,
    ModelOracle,
    best_response_dynamics,
    sample_candidates,
)
from siclop import model
from siclop.obsgraph import feature_length


class FixedOracle:
    """Oracle with state-independent per-agent distributions."""

    def __init__(self, dists):
        self.dists = np.asarray(dists, dtype=float)

    def initial_policies(self, state):
        return self.dists

    def conditional_policy(self, state, agent, actions):
        return self.dists[agent]


class CopyOracle(FixedOracle):
    """Agent 1's best response is to copy agent 0's current action."""

    def conditional_policy(self, state, agent, actions):
        if agent == 1:
            out = np.zeros(9)
            out[actions[0]] = 1.0
            return out
        return self.dists[agent]


def one_hot(idx):
    out = np.zeros(9)
    out[idx] = 1.0
    return out


class TestSampleCandidates:
    def test_one_hot_oracle_single_candidate(self):
        state = generate_scenario(8, 8, 2, 2, 30, seed=1)
        oracle = FixedOracle([one_hot(3), one_hot(5)])
        cset = sample_candidates(oracle, state, k=8, sweeps=2, seed=0)
        assert cset.distinct_count == 1
        assert len(cset.joint_actions) == 32  # hits the 4k append cap
        assert all(
            a == (AgentAction(3), AgentAction(5)) for a in cset.joint_actions
        )

    def test_uniform_single_agent_chi_square(self):
        state = generate_scenario(8, 8, 1, 0, 30, seed=2)
        oracle = FixedOracle([np.full(9, 1.0 / 9)])
        # k chosen so the 4k append cap yields exactly 10,000 draws
        cset = sample_candidates(oracle, state, k=2500, sweeps=1, seed=3)
        assert len(cset.joint_actions) == 10000
        counts = Counter(a[0] for a in cset.joint_actions)
        observed = [counts.get(AgentAction(i), 0) for i in range(9)]
        assert stats.chisquare(observed).pvalue > 0.01

    def test_copy_oracle_propagates_through_sweep(self):
        state = generate_scenario(8, 8, 2, 2, 30, seed=4)
        oracle = CopyOracle([np.full(9, 1.0 / 9), np.full(9, 1.0 / 9)])
        cset = sample_candidates(oracle, state, k=8, sweeps=1, seed=5)
        for joint in cset.joint_actions:
            assert joint[1] == joint[0]

    def test_seed_determinism(self):
        state = generate_scenario(8, 8, 3, 2, 30, seed=6)
        oracle = FixedOracle(np.full((3, 9), 1.0 / 9))
        a = sample_candidates(oracle, state, k=6, sweeps=2, seed=42)
        b = sample_candidates(oracle, state, k=6, sweeps=2, seed=42)
        assert a == b

    def test_never_empty_and_capped(self):
        state = generate_scenario(8, 8, 2, 0, 30, seed=7)
        oracle = FixedOracle(np.full((2, 9), 1.0 / 9))
        for k in (1, 3, 8):
            cset = sample_candidates(oracle, state, k=k, sweeps=2, seed=8)
            assert 1 <= len(cset.joint_actions) <= 4 * k
            assert 1 <= cset.distinct_count <= k

    def test_done_agents_forced_stay(self):
        from dataclasses import replace

        state = generate_scenario(8, 8, 3, 0, 30, seed=9)
        agents = list(state.agents)
        agents[1] = replace(agents[1], done=True)
        state = replace(state, agents=tuple(agents))
        oracle = FixedOracle(np.full((3, 9), 1.0 / 9))
        cset = sample_candidates(oracle, state, k=4, sweeps=2, seed=10)
        for joint in cset.joint_actions:
            assert joint[1] == AgentAction.STAY

    def test_priors_sum_to_one(self):
        state = generate_scenario(8, 8, 2, 0, 30, seed=11)
        oracle = FixedOracle(np.full((2, 9), 1.0 / 9))
        cset = sample_candidates(oracle, state, k=8, sweeps=2, seed=12)
        priors = cset.priors()
        assert sum(priors.values()) == pytest.approx(1.0)
        assert len(priors) == cset.distinct_count

    def test_invalid_arguments(self):
        state = generate_scenario(8, 8, 1, 0, 30, seed=13)
        oracle = FixedOracle([np.full(9, 1.0 / 9)])
        with pytest.raises(ValueError):
            sample_candidates(oracle, state, k=0)
        with pytest.raises(ValueError):
            sample_candidates(oracle, state, k=2, sweeps=0)


class TestModelOracle:
    def test_distributions_and_conditioning(self):
        state = generate_scenario(8, 8, 3, 2, 30, seed=14)
        params = model.init_params(feature_length(2), gcn_widths=(8, 8),
                                   head_hidden=8, seed=0)
        oracle = ModelOracle(params, radius=2)
        init = oracle.initial_policies(state)
        assert init.shape == (3, 9)
        assert np.allclose(init.sum(axis=1), 1.0, atol=1e-9)
        joint = (AgentAction.N, AgentAction.STAY, AgentAction.E)
        cond = oracle.conditional_policy(state, 0, joint)
        assert cond.shape == (9,)
        assert cond.sum() == pytest.approx(1.0)

    def test_own_action_does_not_condition_self(self):
        state = generate_scenario(8, 8, 2, 0, 30, seed=15)
        params = model.init_params(feature_length(2), gcn_widths=(8, 8),
                                   head_hidden=8, seed=1)
        oracle = ModelOracle(params, radius=2)
        a = oracle.conditional_policy(state, 0, (AgentAction.N, AgentAction.E))
        b = oracle.conditional_policy(state, 0, (AgentAction.S, AgentAction.E))
        assert np.array_equal(a, b)


def coordination_payoff(joint):
    return (1.0, 1.0) if joint[0] == joint[1] else (0.0, 0.0)


def matching_pennies(joint):
    same = joint[0] == joint[1]
    return (1.0, -1.0) if same else (-1.0, 1.0)


class TestBestResponseDynamics:
    def test_coordination_game_converges(self):
        final, trace = best_response_dynamics(
            coordination_payoff, [2, 2], start=(0, 1), max_sweeps=2
        )
        assert final[0] == final[1]
        assert is_pure_nash(coordination_payoff, [2, 2], final)
        for i in range(2):
            series = [r[i] for r in trace]
            assert all(b >= a for a, b in zip(series, series[1:]))

    def test_start_at_equilibrium_unchanged(self):
        final, trace = best_response_dynamics(
            coordination_payoff, [2, 2], start=(1, 1), max_sweeps=1
        )
        assert final == (1, 1)
        assert trace[0] == (1.0, 1.0)

    def test_matching_pennies_no_convergence(self):
        assert pure_nash_set(matching_pennies, [2, 2]) == []
        with pytest.raises(NoConvergence):
            best_response_dynamics(matching_pennies, [2, 2], start=(0, 0))

    def test_fixed_point_is_pure_nash_on_potential_games(self, rng):
        for _ in range(25):
            n_agents = int(rng.integers(2, 4))
            n_actions = [int(rng.integers(3, 10)) for _ in range(n_agents)]
            payoff = random_potential_game(rng, n_agents, n_actions)
            start = tuple(int(rng.integers(c)) for c in n_actions)
            final, trace = best_response_dynamics(payoff, n_actions, start)
            assert is_pure_nash(payoff, n_actions, final)

    def test_updating_agent_never_loses(self, rng):
        # replay the dynamics manually to attribute each trace entry
        payoff = random_potential_game(rng, 2, [4, 4])
        final, trace = best_response_dynamics(payoff, [4, 4], start=(0, 0))
        # trace[0] is the start; entry 2t+1 is after agent 0's update in
        # sweep t, entry 2t+2 after agent 1's update
        for t in range(1, len(trace)):
            agent = (t - 1) % 2
            assert trace[t][agent] >= trace[t - 1][agent] - 1e-12
