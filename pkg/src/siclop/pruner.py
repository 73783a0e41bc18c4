"""Joint-action pruning: Gibbs-style resampling of per-agent conditional
policies to draw a small candidate set from the exponential joint action
space, plus deterministic best-response dynamics for equilibrium analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .env import AgentAction, N_ACTIONS
from .errors import NoConvergence
from .model import COND_DIM, Predictor
from .obsgraph import preprocess

DEFAULT_K = 8
DEFAULT_SWEEPS = 2
MAX_DRAW_FACTOR = 4  # total appends capped at 4k so confident policies terminate


class PolicyOracle(Protocol):
    def initial_policies(self, state) -> np.ndarray:
        """Unconditioned per-agent distributions, shape (n, 9)."""

    def conditional_policy(self, state, agent, actions) -> np.ndarray:
        """Agent's distribution given the others' current intended actions."""


class ModelOracle:
    """Network-backed oracle. Others' intended moves are passed to the
    network as one-hot conditioning features; the underlying state (and its
    step counter) stays fixed."""

    def __init__(self, params, radius):
        self.params = params
        self.radius = radius
        self._state = None
        self._predictor = None

    def _bind(self, state):
        if self._state is not state:
            self._state = state
            self._predictor = Predictor(self.params, preprocess(state, self.radius))
        return self._predictor

    def initial_policies(self, state):
        return self._bind(state).policies()

    def conditional_policy(self, state, agent, actions):
        predictor = self._bind(state)
        n = len(state.agents)
        cond = np.zeros((n, COND_DIM))
        for j in range(n):
            if j != agent and not state.agents[j].done:
                cond[j, actions[j]] = 1.0
        return predictor.policies(cond)[agent]


@dataclass(frozen=True)
class CandidateSet:
    joint_actions: list  # appended draws, duplicates kept
    distinct_count: int

    def priors(self):
        """Appearance frequency of each distinct joint action."""
        counts = {}
        for a in self.joint_actions:
            counts[a] = counts.get(a, 0) + 1
        total = len(self.joint_actions)
        return {a: c / total for a, c in counts.items()}


def _sample_index(rng, dist):
    cum = np.cumsum(dist)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1])), len(dist) - 1)


def sample_candidates(oracle, state, k=DEFAULT_K, sweeps=DEFAULT_SWEEPS, seed=0):
    """Draw candidate joint actions by sweeping conditional resampling.

    The initial joint action comes from the unconditioned policies; each
    full sweep resamples every live agent in index order from its
    conditional policy and then appends the current joint action. Stops at
    k distinct candidates or MAX_DRAW_FACTOR*k total appends, whichever
    comes first, so one-hot policies still terminate.
    """
    if k < 1 or sweeps < 1:
        raise ValueError("k and sweeps must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(state.agents)
    live = [i for i in range(n) if not state.agents[i].done]
    max_draws = MAX_DRAW_FACTOR * k

    init = oracle.initial_policies(state)
    current = [AgentAction.STAY] * n
    for i in live:
        current[i] = AgentAction(_sample_index(rng, init[i]))

    appended = []
    distinct = set()
    while len(distinct) < k and len(appended) < max_draws:
        for _ in range(sweeps):
            for i in live:
                dist = oracle.conditional_policy(state, i, tuple(current))
                current[i] = AgentAction(_sample_index(rng, dist))
            joint = tuple(current)
            appended.append(joint)
            distinct.add(joint)
            if len(distinct) >= k or len(appended) >= max_draws:
                break
    return CandidateSet(joint_actions=appended, distinct_count=len(distinct))


def best_response_dynamics(payoff, n_actions, start, max_sweeps=100):
    """Iterate exact single-agent best responses on a matrix game.

    `payoff` maps a joint action tuple to per-agent rewards; `n_actions`
    gives each agent's action count. An agent keeps its current action on
    ties, so a fixed point is exactly a pure Nash equilibrium. Returns the
    equilibrium and the per-agent reward trace recorded after every
    single-agent update; raises NoConvergence when the dynamics cycle.
    """
    current = list(start)
    trace = [tuple(payoff(tuple(current)))]
    for _ in range(max_sweeps):
        changed = False
        for i, count in enumerate(n_actions):
            best_action = current[i]
            best_value = payoff(tuple(current))[i]
            for a in range(count):
                if a == current[i]:
                    continue
                trial = list(current)
                trial[i] = a
                value = payoff(tuple(trial))[i]
                if value > best_value:
                    best_value = value
                    best_action = a
            if best_action != current[i]:
                current[i] = best_action
                changed = True
            trace.append(tuple(payoff(tuple(current))))
        if not changed:
            return tuple(current), trace
    raise NoConvergence(f"no fixed point within {max_sweeps} sweeps")
