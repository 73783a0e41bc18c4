"""Deterministic grid-world MMDP: simultaneous 8-connected movement with
collision, out-of-bounds, proximity and goal-distance shaping rewards.

Reward constants:
    +1.0  reaching the own goal cell
    -1.0  collision (blocked move)
    -0.5  attempting to leave the board
    -0.05 per unordered pair of live agents within Chebyshev distance 1
    +0.1  per unit of Chebyshev distance gained toward the own goal
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum, IntEnum

from .errors import CapacityExceeded, InvalidDimensions, LengthMismatch, TerminalState

GOAL_REWARD = 1.0
COLLISION_PENALTY = -1.0
OUT_OF_BOUNDS_PENALTY = -0.5
PROXIMITY_PENALTY = -0.05
SHAPING_WEIGHT = 0.1


class AgentAction(IntEnum):
    """The 9-way move set: 8 compass directions plus STAY."""

    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7
    STAY = 8


# Index-aligned with AgentAction. Screen-style coordinates: N decreases y.
DELTAS = (
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, 0),
)

N_ACTIONS = 9

JointAction = tuple  # tuple[AgentAction, ...], index-aligned with state.agents


class Event(Enum):
    REACHED_GOAL = "ReachedGoal"
    COLLISION = "Collision"
    OUT_OF_BOUNDS = "OutOfBounds"
    PROXIMITY = "Proximity"


@dataclass(frozen=True)
class AgentStatus:
    position: tuple
    goal: tuple
    done: bool = False
    cumulative_score: float = 0.0


@dataclass(frozen=True)
class GridState:
    width: int
    height: int
    obstacles: frozenset
    agents: tuple
    step: int = 0
    step_limit: int = 40


@dataclass(frozen=True)
class StepOutcome:
    next_state: GridState
    rewards: tuple
    events: tuple  # one frozenset[Event] per agent
    proximity_pairs: tuple  # per-agent count of close live pairs it belongs to


def chebyshev(a, b):
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def generate_scenario(width, height, n_agents, n_obstacles, step_limit, seed):
    """Sample a start state with agents, goals and obstacles on distinct cells."""
    if width < 2 or height < 2:
        raise InvalidDimensions(f"grid must be at least 2x2, got {width}x{height}")
    needed = 2 * n_agents + n_obstacles
    if needed > width * height:
        raise CapacityExceeded(
            f"{needed} distinct cells required on a {width}x{height} grid"
        )
    rng = random.Random(seed)
    cells = [(x, y) for y in range(height) for x in range(width)]
    picked = rng.sample(cells, needed)
    agents = tuple(
        AgentStatus(position=picked[i], goal=picked[n_agents + i])
        for i in range(n_agents)
    )
    obstacles = frozenset(picked[2 * n_agents :])
    return GridState(
        width=width,
        height=height,
        obstacles=obstacles,
        agents=agents,
        step=0,
        step_limit=step_limit,
    )


def is_terminal(state):
    return state.step >= state.step_limit or all(a.done for a in state.agents)


def step(state, action):
    """Resolve one simultaneous joint move.

    Conflict rules: a mover is blocked (collision, stays in place) if its
    target is an obstacle, the cell of a stationary live agent, shared with
    another mover, or part of a position swap. Blocking is iterated to a
    fixed point so a mover behind a blocked mover is blocked as well; live
    agents therefore never overlap. Done agents are frozen and intangible.
    """
    if is_terminal(state):
        raise TerminalState("step() called on a terminal state")
    agents = state.agents
    n = len(agents)
    if len(action) != n:
        raise LengthMismatch(f"joint action has {len(action)} entries for {n} agents")

    pos = [a.position for a in agents]
    live = [not a.done for a in agents]
    events = [set() for _ in range(n)]
    target = list(pos)
    moving = [False] * n

    for i in range(n):
        if not live[i]:
            continue
        dx, dy = DELTAS[action[i]]
        if dx == 0 and dy == 0:
            continue
        tx, ty = pos[i][0] + dx, pos[i][1] + dy
        if 0 <= tx < state.width and 0 <= ty < state.height:
            target[i] = (tx, ty)
            moving[i] = True
        else:
            events[i].add(Event.OUT_OF_BOUNDS)

    collided = [False] * n
    origin_of = {pos[i]: i for i in range(n) if live[i]}
    changed = True
    while changed:
        changed = False
        stationary_cells = {pos[i] for i in range(n) if live[i] and not moving[i]}
        counts = {}
        for i in range(n):
            if moving[i]:
                counts[target[i]] = counts.get(target[i], 0) + 1
        for i in range(n):
            if not moving[i]:
                continue
            t = target[i]
            blocked = (
                t in state.obstacles or t in stationary_cells or counts[t] > 1
            )
            if not blocked:
                j = origin_of.get(t)
                if j is not None and moving[j] and target[j] == pos[i]:
                    blocked = True  # swap
            if blocked:
                moving[i] = False
                target[i] = pos[i]
                collided[i] = True
                changed = True

    rewards = [0.0] * n
    done_after = [a.done for a in agents]
    for i in range(n):
        if not live[i]:
            continue
        if collided[i]:
            events[i].add(Event.COLLISION)
            rewards[i] += COLLISION_PENALTY
        if Event.OUT_OF_BOUNDS in events[i]:
            rewards[i] += OUT_OF_BOUNDS_PENALTY
        goal = agents[i].goal
        rewards[i] += SHAPING_WEIGHT * (
            chebyshev(pos[i], goal) - chebyshev(target[i], goal)
        )
        if target[i] == goal:
            events[i].add(Event.REACHED_GOAL)
            rewards[i] += GOAL_REWARD
            done_after[i] = True

    # Proximity is charged between agents still live after this step.
    prox_pairs = [0] * n
    live_after = [i for i in range(n) if not done_after[i]]
    for idx, i in enumerate(live_after):
        for j in live_after[idx + 1 :]:
            if chebyshev(target[i], target[j]) <= 1:
                prox_pairs[i] += 1
                prox_pairs[j] += 1
    for i in range(n):
        if prox_pairs[i]:
            events[i].add(Event.PROXIMITY)
            rewards[i] += PROXIMITY_PENALTY * prox_pairs[i]

    new_agents = tuple(
        replace(
            agents[i],
            position=target[i],
            done=done_after[i],
            cumulative_score=agents[i].cumulative_score + rewards[i],
        )
        if live[i]
        else agents[i]
        for i in range(n)
    )
    next_state = GridState(
        width=state.width,
        height=state.height,
        obstacles=state.obstacles,
        agents=new_agents,
        step=state.step + 1,
        step_limit=state.step_limit,
    )
    return StepOutcome(
        next_state=next_state,
        rewards=tuple(rewards),
        events=tuple(frozenset(e) for e in events),
        proximity_pairs=tuple(prox_pairs),
    )


def coerce_joint_action(state, action):
    """Force STAY for done agents, per the joint-action invariant."""
    return tuple(
        AgentAction.STAY if a.done else act for a, act in zip(state.agents, action)
    )


def validate(state):
    """Raise AssertionError on any structural invariant violation."""
    seen = set()
    for a in state.agents:
        x, y = a.position
        assert 0 <= x < state.width and 0 <= y < state.height
        gx, gy = a.goal
        assert 0 <= gx < state.width and 0 <= gy < state.height
        if not a.done:
            assert a.position not in seen, "live agents overlap"
            assert a.position not in state.obstacles, "live agent on obstacle"
            seen.add(a.position)
    assert state.step <= state.step_limit


def save_scenario(state, path):
    """Write the plain-text scenario format.

    Header `W H N_AGENTS N_OBSTACLES STEP_LIMIT`, one `x y gx gy` line per
    agent, then one `x y` line per obstacle.
    """
    lines = [
        f"{state.width} {state.height} {len(state.agents)} "
        f"{len(state.obstacles)} {state.step_limit}"
    ]
    for a in state.agents:
        lines.append(f"{a.position[0]} {a.position[1]} {a.goal[0]} {a.goal[1]}")
    for x, y in sorted(state.obstacles):
        lines.append(f"{x} {y}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scenario(path):
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 5:
        raise InvalidDimensions(f"scenario file {path} is truncated")
    width, height, n_agents, n_obstacles, step_limit = map(int, tokens[:5])
    body = tokens[5:]
    if len(body) != 4 * n_agents + 2 * n_obstacles:
        raise InvalidDimensions(f"scenario file {path} has a malformed body")
    agents = []
    for i in range(n_agents):
        x, y, gx, gy = map(int, body[4 * i : 4 * i + 4])
        agents.append(AgentStatus(position=(x, y), goal=(gx, gy)))
    obs = body[4 * n_agents :]
    obstacles = frozenset(
        (int(obs[2 * i]), int(obs[2 * i + 1])) for i in range(n_obstacles)
    )
    state = GridState(
        width=width,
        height=height,
        obstacles=obstacles,
        agents=tuple(agents),
        step=0,
        step_limit=step_limit,
    )
    validate(state)
    return state
