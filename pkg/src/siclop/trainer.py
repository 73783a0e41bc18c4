"""Self-play episode generation, replay storage, and periodic training of
the policy/value network from visit-count policy targets and suffix
returns."""

from __future__ import annotations

import pickle
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import env, model, search
from .errors import CorruptCheckpoint, EmptyStore, TerminalState
from .model import TrainingTarget
from .obsgraph import preprocess

REPLAY_MAGIC = b"SICLOPRB"
REPLAY_VERSION = 1

DEFAULT_EPOCHS = 4
DEFAULT_BATCH = 64
DEFAULT_WINDOW = 10
DEFAULT_CAPACITY = 50


@dataclass(frozen=True)
class StepRecord:
    graph_input: object  # obsgraph.GraphInput at the root
    policy: np.ndarray  # (n, 9) per-agent visit-count marginals
    rewards: np.ndarray  # (n,) realized step rewards
    live: np.ndarray = None  # (n,) 1.0 for agents not yet done at the root


@dataclass(frozen=True)
class EpisodeRecord:
    steps: list  # of StepRecord
    returns: np.ndarray  # (T, n): returns[t, i] = sum of rewards[t':, i] for t' >= t

    @property
    def final_scores(self):
        return self.returns[0] if len(self.steps) else np.zeros(0)


class ReplayStore:
    """Ring buffer of episodes, oldest-first eviction."""

    def __init__(self, capacity=DEFAULT_CAPACITY):
        self.capacity = capacity
        self.episodes = deque(maxlen=capacity)
        self.episode_counter = 0

    def append(self, record):
        self.episodes.append(record)
        self.episode_counter += 1

    def recent(self, window):
        return list(self.episodes)[-window:]

    def __len__(self):
        return len(self.episodes)


def marginalize_policy(root):
    """Per-agent action marginals of the root's joint-action visit counts."""
    n = len(root.state.agents)
    counts = np.zeros((n, env.N_ACTIONS))
    total = 0
    for action, edge in root.children.items():
        if edge.n == 0:
            continue
        total += edge.n
        for i, a in enumerate(action):
            counts[i, a] += edge.n
    if total == 0:
        raise ValueError("root has no visited children to marginalize")
    return counts / total


def run_episode(initial, params, budget, config, seed=0):
    """Plan and step to termination, recording visit-count policy targets
    and step rewards; suffix returns are filled in at episode end."""
    if env.is_terminal(initial):
        raise TerminalState("initial state is already terminal")
    master = np.random.default_rng(seed)
    strategy = search.SiclopStrategy(params, config)
    state = initial
    steps = []
    while not env.is_terminal(state):
        root = search.build_tree(
            state, budget, config, strategy,
            rng=np.random.default_rng(master.integers(2**63)),
        )
        action = search.select_action(root, strategy)
        outcome = env.step(state, action)
        steps.append(
            StepRecord(
                graph_input=preprocess(state, config.radius),
                policy=marginalize_policy(root),
                rewards=np.asarray(outcome.rewards),
                live=np.array([0.0 if a.done else 1.0 for a in state.agents]),
            )
        )
        state = outcome.next_state
    rewards = np.stack([s.rewards for s in steps])
    returns = np.cumsum(rewards[::-1], axis=0)[::-1].copy()
    return EpisodeRecord(steps=steps, returns=returns)


def train(
    params,
    store,
    epochs=DEFAULT_EPOCHS,
    batch_size=DEFAULT_BATCH,
    recent_window=DEFAULT_WINDOW,
    lr=model.DEFAULT_LR,
    seed=0,
):
    """One training round: per epoch, a uniform batch from the most recent
    episodes, combined policy/value loss, one gradient step."""
    if len(store) == 0:
        raise EmptyStore("replay store holds no episodes")
    rng = np.random.default_rng(seed)
    pool = []
    for episode in store.recent(recent_window):
        for t, step_record in enumerate(episode.steps):
            pool.append(
                TrainingTarget(
                    graph_input=step_record.graph_input,
                    target_policies=step_record.policy,
                    target_values=episode.returns[t],
                    # finished agents' forced-STAY marginals are excluded:
                    # left in, they dominate the policy loss precisely when
                    # play succeeds and drag every agent toward STAY
                    target_mask=step_record.live,
                )
            )
    for _ in range(epochs):
        idx = rng.integers(len(pool), size=min(batch_size, len(pool)))
        batch = [pool[i] for i in idx]
        _, grads = model.loss(params, batch)
        params = model.apply_update(params, grads, lr=lr)
    return params


def append_episode(path, record):
    """Append one length-prefixed pickled episode to the replay log,
    writing the versioned header on first use."""
    try:
        with open(path, "rb") as fh:
            has_header = fh.read(len(REPLAY_MAGIC)) == REPLAY_MAGIC
    except FileNotFoundError:
        has_header = False
    with open(path, "ab") as fh:
        if not has_header:
            fh.write(REPLAY_MAGIC + struct.pack("<I", REPLAY_VERSION))
        blob = pickle.dumps(record)
        fh.write(struct.pack("<Q", len(blob)) + blob)


def load_episodes(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(REPLAY_MAGIC):
        raise CorruptCheckpoint("replay log has a bad header")
    off = len(REPLAY_MAGIC) + 4
    episodes = []
    while off < len(data):
        if off + 8 > len(data):
            raise CorruptCheckpoint("truncated replay record length")
        (length,) = struct.unpack_from("<Q", data, off)
        off += 8
        blob = data[off : off + length]
        if len(blob) != length:
            raise CorruptCheckpoint("truncated replay record")
        episodes.append(pickle.loads(blob))
        off += length
    return episodes
