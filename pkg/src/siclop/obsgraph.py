"""Local observation windows and the range-based coordination graph.

Per-agent feature vector layout, for window radius r and W = 2r+1:
    [obstacle plane | other-agent plane | own-goal plane | out-of-board plane
     | dx_goal/width | dy_goal/height | steps_remaining/step_limit | done]
Each plane is the agent-centred W x W window flattened row-major (dy outer,
dx inner), so the vector length F = 4*W*W + 4 is independent of grid size
and agent count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import chebyshev

DEFAULT_RADIUS = 2
N_SCALARS = 4


def feature_length(radius):
    w = 2 * radius + 1
    return 4 * w * w + N_SCALARS


@dataclass(frozen=True)
class CoordinationGraph:
    n: int
    edges: frozenset  # unordered (i, j) pairs with i < j

    def neighbors(self, i):
        return [b if a == i else a for a, b in self.edges if i in (a, b)]


@dataclass(frozen=True)
class GraphInput:
    observations: np.ndarray  # (n, F) float64
    graph: CoordinationGraph


def build_graph(state, radius):
    """Edge (i, j) iff both agents are live and their radius-r ranges
    intersect, i.e. Chebyshev distance <= 2r. Done agents stay as isolated
    nodes so tensor shapes are stable within an episode."""
    agents = state.agents
    n = len(agents)
    edges = set()
    reach = 2 * radius
    for i in range(n):
        if agents[i].done:
            continue
        for j in range(i + 1, n):
            if agents[j].done:
                continue
            if chebyshev(agents[i].position, agents[j].position) <= reach:
                edges.add((i, j))
    return CoordinationGraph(n=n, edges=frozenset(edges))


def preprocess(state, radius=DEFAULT_RADIUS):
    """Build the per-agent observation matrix and coordination graph."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    w = 2 * radius + 1
    plane = w * w
    n = len(state.agents)
    feats = np.zeros((n, 4 * plane + N_SCALARS), dtype=np.float64)

    # Padded board planes; the border band marks out-of-board cells.
    pw, ph = state.width + 2 * radius, state.height + 2 * radius
    obstacle_grid = np.zeros((ph, pw), dtype=np.float64)
    agent_grid = np.zeros((ph, pw), dtype=np.float64)
    oob_grid = np.ones((ph, pw), dtype=np.float64)
    oob_grid[radius : radius + state.height, radius : radius + state.width] = 0.0
    for x, y in state.obstacles:
        obstacle_grid[y + radius, x + radius] = 1.0
    for a in state.agents:
        if not a.done:
            agent_grid[a.position[1] + radius, a.position[0] + radius] = 1.0

    steps_left = (
        (state.step_limit - state.step) / state.step_limit if state.step_limit else 0.0
    )
    for i, a in enumerate(state.agents):
        x, y = a.position
        ys, xs = slice(y, y + w), slice(x, x + w)
        window_agents = agent_grid[ys, xs].copy()
        if not a.done:
            window_agents[radius, radius] = 0.0  # self is not an "other agent"
        feats[i, 0:plane] = obstacle_grid[ys, xs].ravel()
        feats[i, plane : 2 * plane] = window_agents.ravel()
        gx, gy = a.goal
        if abs(gx - x) <= radius and abs(gy - y) <= radius:
            feats[i, 2 * plane + (gy - y + radius) * w + (gx - x + radius)] = 1.0
        feats[i, 3 * plane : 4 * plane] = oob_grid[ys, xs].ravel()
        base = 4 * plane
        feats[i, base] = (gx - x) / state.width
        feats[i, base + 1] = (gy - y) / state.height
        feats[i, base + 2] = steps_left
        feats[i, base + 3] = 1.0 if a.done else 0.0

    return GraphInput(observations=feats, graph=build_graph(state, radius))
