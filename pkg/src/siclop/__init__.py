"""SiCLOP: simulation-based multi-agent online planning.

Grid-world MMDP environment, coordination-graph policy/value network,
Gibbs-style joint-action pruning, anytime MCTS, self-play training, and an
experiment CLI.
"""

from . import cli, env, model, numcore, obsgraph, pruner, search, trainer  # noqa: F401

__version__ = "0.1.0"
