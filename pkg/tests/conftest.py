"""Shared test helpers: brute-force game analysis and random game factories.

The brute-force routines here are the independent oracles for the
best-response machinery; they enumerate the full joint action space and
must stay free of any package search/pruning code.
"""

import itertools

import numpy as np
import pytest


def enumerate_joint_actions(n_actions):
    return list(itertools.product(*(range(c) for c in n_actions)))


def is_pure_nash(payoff, n_actions, joint):
    """Check by exhaustive single-agent deviation."""
    base = payoff(joint)
    for i, count in enumerate(n_actions):
        for a in range(count):
            if a == joint[i]:
                continue
            trial = list(joint)
            trial[i] = a
            if payoff(tuple(trial))[i] > base[i]:
                return False
    return True


def pure_nash_set(payoff, n_actions):
    return [
        joint
        for joint in enumerate_joint_actions(n_actions)
        if is_pure_nash(payoff, n_actions, joint)
    ]


def random_potential_game(rng, n_agents, n_actions):
    """Random game with an exact potential: payoff_i = potential + f_i(a_-i).

    Single-agent improvements raise the potential, so best-response
    dynamics cannot cycle and a pure equilibrium always exists.
    """
    shape = tuple(n_actions)
    potential = rng.uniform(-1.0, 1.0, size=shape)
    offsets = []
    for i in range(n_agents):
        other_shape = tuple(c for j, c in enumerate(n_actions) if j != i)
        offsets.append(rng.uniform(-1.0, 1.0, size=other_shape))

    def payoff(joint):
        out = []
        for i in range(n_agents):
            others = tuple(a for j, a in enumerate(joint) if j != i)
            out.append(float(potential[joint] + offsets[i][others]))
        return tuple(out)

    return payoff


def table_game(tables):
    """Payoff function from per-agent payoff arrays indexed by joint action."""

    def payoff(joint):
        return tuple(float(t[joint]) for t in tables)

    return payoff


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
