"""Experiment harness: `siclop train|eval|bench` with a flat key=value
config file, CSV metrics output, and selectable planners (the full
planner, a uniform-prior MCTS baseline, and a random baseline).

Exit codes: 0 success, 2 config error, 3 IO error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import env, model, search, trainer
from .errors import ConfigError, SiclopError
from .obsgraph import feature_length, preprocess

CSV_HEADER = "episode,mean_score,collisions,oob,proximity,goals,ms_per_action"

PLANNERS = ("siclop", "uniform-mcts", "random")


@dataclass
class ExperimentConfig:
    # environment
    width: int = 8
    height: int = 8
    n_agents: int = 4
    n_obstacles: int = 4
    step_limit: int = 25
    # search
    c: float = 1.4
    budget_kind: str = "nodes"
    budget: float = 200
    k: int = 8
    sweeps: int = 2
    radius: int = 2
    rollout_depth: int = 10
    # model
    gcn_layers: int = 2
    hidden: int = 64
    head_hidden: int = 64
    temperature: float = 1.0
    lr: float = 1e-3
    # schedule
    episodes: int = 200
    train_every: int = 10
    epochs: int = 4
    batch_size: int = 64
    recent_window: int = 10
    replay_capacity: int = 50
    checkpoint_every: int = 50
    eval_episodes: int = 50
    # run
    seed: int = 0
    planner: str = "siclop"
    jobs: int = 1
    out: str = "metrics.csv"
    checkpoint: str = "checkpoint.bin"
    scenarios: str = ""
    replay_log: str = ""

    def validate(self):
        for name in (
            "width", "height", "n_agents", "step_limit", "k", "sweeps", "radius",
            "gcn_layers", "hidden", "head_hidden", "episodes", "train_every",
            "epochs", "batch_size", "recent_window", "replay_capacity", "jobs",
            "eval_episodes",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.planner not in PLANNERS:
            raise ConfigError(f"unknown planner {self.planner!r}")
        if self.budget_kind not in ("nodes", "time_ms"):
            raise ConfigError(f"unknown budget_kind {self.budget_kind!r}")
        if self.temperature <= 0 or self.lr <= 0 or self.budget <= 0:
            raise ConfigError("temperature, lr and budget must be positive")

    def search_config(self):
        return search.SearchConfig(
            c=self.c, k=self.k, sweeps=self.sweeps, radius=self.radius,
            rollout_depth=self.rollout_depth, seed=self.seed,
        )

    def budget_obj(self):
        return search.Budget(kind=self.budget_kind, amount=self.budget)

    def init_params(self, seed=None):
        return model.init_params(
            obs_dim=feature_length(self.radius),
            gcn_widths=(self.hidden,) * self.gcn_layers,
            head_hidden=self.head_hidden,
            temperature=self.temperature,
            seed=self.seed if seed is None else seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(path):
    """Flat `key=value` lines, `#` comments; unknown keys are errors."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return make_config(values)


def make_config(values):
    kwargs = {}
    for key, value in values.items():
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


@dataclass
class MetricsRow:
    episode: int
    mean_score: float
    collisions: int
    oob: int
    proximity: float
    goals: int
    ms_per_action: float

    def csv(self):
        return (
            f"{self.episode},{self.mean_score:.6f},{self.collisions},"
            f"{self.oob},{self.proximity:.6f},{self.goals},{self.ms_per_action:.3f}"
        )


def _make_strategy(kind, params, scfg):
    if kind == "siclop":
        return search.SiclopStrategy(params, scfg)
    if kind == "uniform-mcts":
        return search.UniformStrategy(scfg)
    return None  # random planner


def play_episode(state, kind, params, budget, scfg, seed, collect=False):
    """Run one planning-only episode; returns (MetricsRow fields, records).

    With collect=True also returns the per-step training records used by
    the self-play loop.
    """
    master = np.random.default_rng(seed)
    strategy = _make_strategy(kind, params, scfg)
    collisions = oob = goals = 0
    proximity = 0.0
    total_score = 0.0
    steps = []
    action_times = []
    while not env.is_terminal(state):
        t0 = time.perf_counter()
        if kind == "random":
            rng = np.random.default_rng(master.integers(2**63))
            action = tuple(
                env.AgentAction.STAY
                if a.done
                else env.AgentAction(int(rng.integers(env.N_ACTIONS)))
                for a in state.agents
            )
            root = None
        else:
            root = search.build_tree(
                state, budget, scfg, strategy,
                rng=np.random.default_rng(master.integers(2**63)),
            )
            action = search.select_action(root, strategy)
        action_times.append((time.perf_counter() - t0) * 1000.0)
        outcome = env.step(state, action)
        if collect and root is not None:
            steps.append(
                trainer.StepRecord(
                    graph_input=preprocess(state, scfg.radius),
                    policy=trainer.marginalize_policy(root),
                    rewards=np.asarray(outcome.rewards),
                    live=np.array([0.0 if a.done else 1.0 for a in state.agents]),
                )
            )
        for events, pairs in zip(outcome.events, outcome.proximity_pairs):
            if env.Event.COLLISION in events:
                collisions += 1
            if env.Event.OUT_OF_BOUNDS in events:
                oob += 1
            if env.Event.REACHED_GOAL in events:
                goals += 1
            proximity += -env.PROXIMITY_PENALTY * pairs
        total_score += float(np.sum(outcome.rewards))
        state = outcome.next_state
    record = None
    if collect and steps:
        rewards = np.stack([s.rewards for s in steps])
        returns = np.cumsum(rewards[::-1], axis=0)[::-1].copy()
        record = trainer.EpisodeRecord(steps=steps, returns=returns)
    metrics = dict(
        mean_score=total_score / len(state.agents),
        collisions=collisions,
        oob=oob,
        proximity=proximity,
        goals=goals,
        ms_per_action=float(np.mean(action_times)) if action_times else 0.0,
    )
    return metrics, record


def cmd_train(config):
    """Self-play training loop; writes one metrics row per episode,
    periodic checkpoints, and the final checkpoint."""
    params = config.init_params()
    store = trainer.ReplayStore(capacity=config.replay_capacity)
    scfg = config.search_config()
    budget = config.budget_obj()
    seed_rng = np.random.default_rng(config.seed)
    rows = []
    with open(config.out, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for ep in range(config.episodes):
            scenario_seed = int(seed_rng.integers(2**63))
            state = env.generate_scenario(
                config.width, config.height, config.n_agents,
                config.n_obstacles, config.step_limit, seed=scenario_seed,
            )
            metrics, record = play_episode(
                state, "siclop", params, budget, scfg,
                seed=scenario_seed ^ 1, collect=True,
            )
            if record is not None:
                store.append(record)
                if config.replay_log:
                    trainer.append_episode(config.replay_log, record)
            row = MetricsRow(episode=ep, **metrics)
            rows.append(row)
            fh.write(row.csv() + "\n")
            fh.flush()
            if (ep + 1) % config.train_every == 0 and len(store):
                params = trainer.train(
                    params, store,
                    epochs=config.epochs, batch_size=config.batch_size,
                    recent_window=config.recent_window, lr=config.lr,
                    seed=config.seed + ep,
                )
            if (ep + 1) % config.checkpoint_every == 0:
                _write_checkpoint(config.checkpoint, params)
    _write_checkpoint(config.checkpoint, params)
    return rows


def _write_checkpoint(path, params):
    try:
        with open(path, "wb") as fh:
            fh.write(model.save(params))
    except OSError as exc:
        raise IOError(f"cannot write checkpoint {path}: {exc}") from exc


def _load_checkpoint(path):
    with open(path, "rb") as fh:
        return model.load(fh.read())


def _eval_states(config):
    """Scenario directory if given, else seeded generation."""
    if config.scenarios:
        names = sorted(
            f for f in os.listdir(config.scenarios) if f.endswith(".txt")
        )
        if not names:
            raise ConfigError(f"no scenario files in {config.scenarios}")
        return [env.load_scenario(os.path.join(config.scenarios, n)) for n in names]
    return [
        env.generate_scenario(
            config.width, config.height, config.n_agents,
            config.n_obstacles, config.step_limit, seed=config.seed + i,
        )
        for i in range(config.eval_episodes)
    ]


def _eval_one(args):
    idx, state, kind, params, budget, scfg, seed = args
    metrics, _ = play_episode(state, kind, params, budget, scfg, seed=seed)
    return MetricsRow(episode=idx, **metrics)


def run_eval(config, params):
    states = _eval_states(config)
    tasks = [
        (i, s, config.planner, params, config.budget_obj(),
         config.search_config(), config.seed + 1000 + i)
        for i, s in enumerate(states)
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_eval_one, tasks))
    else:
        rows = [_eval_one(t) for t in tasks]
    with open(config.out, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")
    return rows


def cmd_eval(config):
    """Planning-only evaluation of a checkpoint (or baselines) over a
    scenario directory or a seed set; never mutates the checkpoint."""
    params = None
    if config.planner == "siclop":
        params = _load_checkpoint(config.checkpoint)
    return run_eval(config, params)


def cmd_bench(config):
    """Like eval but usable without a checkpoint: baselines and untrained
    networks, for latency and score comparisons."""
    params = None
    if config.planner == "siclop":
        if config.checkpoint and os.path.exists(config.checkpoint):
            params = _load_checkpoint(config.checkpoint)
        else:
            params = config.init_params()
    return run_eval(config, params)


def _build_parser():
    parser = argparse.ArgumentParser(prog="siclop")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--scenarios", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--planner", choices=PLANNERS, default=None)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config) if args.config else ExperimentConfig()
        overrides = {
            key: getattr(args, key)
            for key in ("checkpoint", "scenarios", "seed", "jobs", "planner", "out")
            if getattr(args, key) is not None
        }
        if overrides:
            config = replace(config, **overrides)
            config.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config)
        else:
            cmd_bench(config)
    except (OSError, IOError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SiclopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
