"""Anytime MCTS over joint actions with pruner-limited expansion and
neural value bootstrapping.

A node's visit count N always equals one (its expansion visit) plus the
sum of its child edge visit counts: every backup walks a path of
(node, edge) pairs and increments both ends of each pair together.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import env
from .errors import TerminalRoot
from .model import Predictor
from .obsgraph import preprocess
from .pruner import ModelOracle, sample_candidates


@dataclass
class SearchConfig:
    c: float = 1.4
    k: int = 8
    sweeps: int = 2
    radius: int = 2
    rollout_depth: int = 10
    seed: int = 0


@dataclass
class Budget:
    kind: str  # "nodes" or "time_ms"
    amount: float

    def __post_init__(self):
        if self.kind not in ("nodes", "time_ms"):
            raise ValueError(f"unknown budget kind {self.kind!r}")
        if self.amount <= 0:
            raise ValueError("budget must be strictly positive")


class Edge:
    __slots__ = ("prior", "n", "w", "child")

    def __init__(self, prior, child):
        self.prior = prior
        self.n = 0
        self.w = 0.0
        self.child = child

    @property
    def q(self):
        return self.w / max(self.n, 1)


class SearchNode:
    __slots__ = ("state", "visits", "children", "expanded", "terminal", "terminal_value")

    def __init__(self, state):
        self.state = state
        self.visits = 1  # the expansion visit
        self.children = {}  # JointAction -> Edge, insertion-ordered
        self.expanded = False
        self.terminal = env.is_terminal(state)
        self.terminal_value = 0.0


def score(edge, parent_n, c, prior):
    """Exploration-adjusted edge value; unvisited edges rank first."""
    if edge.n == 0:
        return math.inf
    return edge.q + c * prior * math.sqrt(math.log(parent_n) / edge.n)


def backpropagate(path, value):
    """Add one visit and `value` along a root-anchored (node, edge) path."""
    for node, edge in path:
        node.visits += 1
        edge.n += 1
        edge.w += value


def _select_child(node, c):
    best = None
    best_key = None
    for idx, edge in enumerate(node.children.values()):
        key = (score(edge, node.visits, c, edge.prior), edge.prior, -idx)
        if best_key is None or key > best_key:
            best_key = key
            best = edge
    return best


class SiclopStrategy:
    """Pruner-proposed candidates with network value bootstrapping."""

    def __init__(self, params, config):
        self.params = params
        self.config = config
        self.oracle = ModelOracle(params, config.radius)

    def propose(self, state, seed):
        cset = sample_candidates(
            self.oracle, state, k=self.config.k, sweeps=self.config.sweeps, seed=seed
        )
        return list(cset.priors().items())

    def evaluate(self, state, rng):
        predictor = Predictor(self.params, preprocess(state, self.config.radius))
        return predictor.policy_value().aggregate_value

    def fallback_action(self, state):
        policies = self.oracle.initial_policies(state)
        return tuple(
            env.AgentAction.STAY if a.done else env.AgentAction(int(np.argmax(policies[i])))
            for i, a in enumerate(state.agents)
        )


class UniformStrategy:
    """Baseline: uniform random candidate sets with equal priors and random
    rollouts of bounded depth for leaf evaluation. With equal priors the
    selection rule reduces to plain UCT."""

    def __init__(self, config):
        self.config = config

    def propose(self, state, seed):
        rng = np.random.default_rng(seed)
        live = [i for i in range(len(state.agents)) if not state.agents[i].done]
        seen = set()
        for _ in range(self.config.k):
            joint = [env.AgentAction.STAY] * len(state.agents)
            for i in live:
                joint[i] = env.AgentAction(int(rng.integers(env.N_ACTIONS)))
            seen.add(tuple(joint))
        prior = 1.0 / len(seen)
        return [(a, prior) for a in seen]

    def evaluate(self, state, rng):
        total = 0.0
        current = state
        for _ in range(self.config.rollout_depth):
            if env.is_terminal(current):
                break
            joint = tuple(
                env.AgentAction.STAY
                if a.done
                else env.AgentAction(int(rng.integers(env.N_ACTIONS)))
                for a in current.agents
            )
            outcome = env.step(current, joint)
            total += float(np.mean(outcome.rewards))
            current = outcome.next_state
        return total

    def fallback_action(self, state):
        rng = np.random.default_rng(self.config.seed)
        return tuple(
            env.AgentAction.STAY
            if a.done
            else env.AgentAction(int(rng.integers(env.N_ACTIONS)))
            for a in state.agents
        )


def build_tree(root_state, budget, config, strategy, rng=None):
    """Run simulations until the budget is exhausted; returns the root.

    A node budget counts tree nodes created (each expansion adds one child
    per distinct candidate); revisits of terminal leaves count one unit so
    a fully terminal tree still drains the budget. The first expansion
    always runs, so a tight wall-clock budget costs at most one expansion
    of overrun.
    """
    if env.is_terminal(root_state):
        raise TerminalRoot("cannot plan from a terminal state")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    root = SearchNode(root_state)
    deadline = None
    nodes_left = None
    if budget.kind == "time_ms":
        deadline = time.perf_counter() + budget.amount / 1000.0
    else:
        nodes_left = int(budget.amount)

    first = True
    while first or _budget_left(deadline, nodes_left):
        first = False
        node = root
        path = []
        while node.expanded and node.children and not node.terminal:
            edge = _select_child(node, config.c)
            path.append((node, edge))
            node = edge.child
        if node.terminal:
            backpropagate(path, node.terminal_value)
            if nodes_left is not None:
                nodes_left -= 1
            continue
        candidates = strategy.propose(node.state, int(rng.integers(2**63)))
        for action, prior in candidates:
            outcome = env.step(node.state, action)
            child = SearchNode(outcome.next_state)
            immediate = float(np.mean(outcome.rewards))
            if child.terminal:
                value = immediate
                child.terminal_value = value
            else:
                value = immediate + strategy.evaluate(child.state, rng)
            edge = Edge(prior, child)
            node.children[action] = edge
            backpropagate(path + [(node, edge)], value)
            if nodes_left is not None:
                nodes_left -= 1
        node.expanded = True
    return root


def _budget_left(deadline, nodes_left):
    if deadline is not None:
        return time.perf_counter() < deadline
    return nodes_left > 0


def select_action(root, strategy=None):
    """Most-visited root joint action; ties broken by prior then stable
    candidate order."""
    best = None
    best_key = None
    for idx, (action, edge) in enumerate(root.children.items()):
        key = (edge.n, edge.prior, -idx)
        if best_key is None or key > best_key:
            best_key = key
            best = action
    if best is None:
        if strategy is not None:
            return strategy.fallback_action(root.state)
        raise TerminalRoot("root has no children")
    return best


def plan(root_state, model_params, budget, config, rng=None):
    """Full planning call: build the tree and return the chosen action."""
    strategy = SiclopStrategy(model_params, config)
    root = build_tree(root_state, budget, config, strategy, rng)
    return select_action(root, strategy)
