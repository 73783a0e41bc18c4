"""Coordination-graph policy/value network.

Feature extraction is a stack of GCN layers over the symmetrically
normalized adjacency (with self-loops); two small perceptron heads emit a
per-agent Boltzmann policy over the 9 moves and a per-agent value whose
mean is the aggregate state value.

The network input is the observation vector plus a 9-slot intended-move
block used by the pruner to condition one agent's policy on the current
action choices of the others; the block is all-zero for plain prediction,
so `predict` accepts observations of the bare length F.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCheckpoint, ShapeMismatch, VersionMismatch
from .numcore import (
    clip_by_global_norm,
    relu,
    relu_backward,
    softmax_cross_entropy,
    softmax_rows,
)

N_ACTIONS = 9
COND_DIM = N_ACTIONS  # one-hot intended move appended to each observation

CHECKPOINT_MAGIC = b"SICLOPNN"
CHECKPOINT_VERSION = 1

GRAD_CLIP_NORM = 5.0
DEFAULT_LR = 1e-3


@dataclass
class ModelParams:
    gcn: list  # weight l maps d_{l-1} -> d_l, d_0 = obs_dim + COND_DIM
    policy_w1: np.ndarray
    policy_b1: np.ndarray
    policy_w2: np.ndarray
    policy_b2: np.ndarray
    value_w1: np.ndarray
    value_b1: np.ndarray
    value_w2: np.ndarray
    value_b2: np.ndarray
    temperature: float = 1.0
    obs_dim: int = 0

    def named_arrays(self):
        out = [(f"gcn{l}", w) for l, w in enumerate(self.gcn)]
        out += [
            ("policy_w1", self.policy_w1),
            ("policy_b1", self.policy_b1),
            ("policy_w2", self.policy_w2),
            ("policy_b2", self.policy_b2),
            ("value_w1", self.value_w1),
            ("value_b1", self.value_b1),
            ("value_w2", self.value_w2),
            ("value_b2", self.value_b2),
        ]
        return out

    def replace_arrays(self, arrays):
        n_gcn = len(self.gcn)
        return ModelParams(
            gcn=list(arrays[:n_gcn]),
            policy_w1=arrays[n_gcn],
            policy_b1=arrays[n_gcn + 1],
            policy_w2=arrays[n_gcn + 2],
            policy_b2=arrays[n_gcn + 3],
            value_w1=arrays[n_gcn + 4],
            value_b1=arrays[n_gcn + 5],
            value_w2=arrays[n_gcn + 6],
            value_b2=arrays[n_gcn + 7],
            temperature=self.temperature,
            obs_dim=self.obs_dim,
        )


@dataclass
class Gradients:
    arrays: list  # index-aligned with ModelParams.named_arrays()


@dataclass(frozen=True)
class PolicyValue:
    policies: np.ndarray  # (n, 9), each row a distribution
    values: np.ndarray  # (n,)
    aggregate_value: float


@dataclass(frozen=True)
class TrainingTarget:
    graph_input: object  # obsgraph.GraphInput
    target_policies: np.ndarray  # (n, 9)
    target_values: np.ndarray  # (n,)
    # optional per-agent row weights; None means every agent contributes.
    # The trainer zeroes finished agents, whose forced-STAY marginals would
    # otherwise flood the policy loss as play improves.
    target_mask: object = None


def _glorot(rng, rows, cols):
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(obs_dim, gcn_widths=(64, 64), head_hidden=64, temperature=1.0, seed=0):
    rng = np.random.default_rng(seed)
    d0 = obs_dim + COND_DIM
    gcn = []
    prev = d0
    for width in gcn_widths:
        gcn.append(_glorot(rng, prev, width))
        prev = width
    # Output layers start at zero: an untrained network predicts a uniform
    # policy and zero value, so early search is guided by env rewards alone.
    return ModelParams(
        gcn=gcn,
        policy_w1=_glorot(rng, prev, head_hidden),
        policy_b1=np.zeros((1, head_hidden)),
        policy_w2=np.zeros((head_hidden, N_ACTIONS)),
        policy_b2=np.zeros((1, N_ACTIONS)),
        value_w1=_glorot(rng, prev, head_hidden),
        value_b1=np.zeros((1, head_hidden)),
        value_w2=np.zeros((head_hidden, 1)),
        value_b2=np.zeros((1, 1)),
        temperature=temperature,
        obs_dim=obs_dim,
    )


def normalized_adjacency(graph):
    """D^{-1/2} (A + I) D^{-1/2} for the coordination graph."""
    n = graph.n
    a = np.eye(n)
    for i, j in graph.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def _forward(params, obs_full, a_hat):
    """Shared forward pass; returns outputs plus caches for backprop."""
    h = obs_full
    gcn_pre = []
    gcn_h = [h]
    for w in params.gcn:
        pre = a_hat @ (h @ w)
        h = relu(pre)
        gcn_pre.append(pre)
        gcn_h.append(h)
    p_pre = h @ params.policy_w1 + params.policy_b1
    p_hidden = relu(p_pre)
    logits = p_hidden @ params.policy_w2 + params.policy_b2
    v_pre = h @ params.value_w1 + params.value_b1
    v_hidden = relu(v_pre)
    values = v_hidden @ params.value_w2 + params.value_b2
    return {
        "gcn_pre": gcn_pre,
        "gcn_h": gcn_h,
        "p_pre": p_pre,
        "p_hidden": p_hidden,
        "logits": logits,
        "v_pre": v_pre,
        "v_hidden": v_hidden,
        "values": values,
    }


def _full_obs(params, observations, cond=None):
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise ShapeMismatch(
            f"expected observations of width {params.obs_dim}, got {obs.shape}"
        )
    if cond is None:
        cond = np.zeros((obs.shape[0], COND_DIM))
    return np.concatenate([obs, cond], axis=1)


def predict(params, graph_input, cond=None):
    obs_full = _full_obs(params, graph_input.observations, cond)
    a_hat = normalized_adjacency(graph_input.graph)
    cache = _forward(params, obs_full, a_hat)
    policies = softmax_rows(cache["logits"], params.temperature)
    values = cache["values"][:, 0]
    return PolicyValue(
        policies=policies, values=values, aggregate_value=float(values.mean())
    )


class Predictor:
    """Repeated evaluation of one graph input under varying conditioning.

    Precomputes the adjacency and the observation part of the first GCN
    layer so each conditional policy query only pays for the small
    conditioning block and the later layers.
    """

    def __init__(self, params, graph_input):
        self.params = params
        obs = np.asarray(graph_input.observations, dtype=np.float64)
        if obs.shape[1] != params.obs_dim:
            raise ShapeMismatch(
                f"expected observations of width {params.obs_dim}, got {obs.shape}"
            )
        self.a_hat = normalized_adjacency(graph_input.graph)
        w1 = params.gcn[0]
        self._w1_obs = w1[: params.obs_dim]
        self._w1_cond = w1[params.obs_dim :]
        self._base1 = self.a_hat @ (obs @ self._w1_obs)

    def _hidden(self, cond=None):
        pre = self._base1
        if cond is not None:
            pre = pre + self.a_hat @ (cond @ self._w1_cond)
        h = relu(pre)
        for w in self.params.gcn[1:]:
            h = relu(self.a_hat @ (h @ w))
        return h

    def policies(self, cond=None):
        h = self._hidden(cond)
        p = self.params
        logits = relu(h @ p.policy_w1 + p.policy_b1) @ p.policy_w2 + p.policy_b2
        return softmax_rows(logits, p.temperature)

    def policy_value(self, cond=None):
        h = self._hidden(cond)
        p = self.params
        logits = relu(h @ p.policy_w1 + p.policy_b1) @ p.policy_w2 + p.policy_b2
        values = (relu(h @ p.value_w1 + p.value_b1) @ p.value_w2 + p.value_b2)[:, 0]
        return PolicyValue(
            policies=softmax_rows(logits, p.temperature),
            values=values,
            aggregate_value=float(values.mean()),
        )


def loss(params, batch):
    """Cross-entropy + squared-error loss with gradients for every
    parameter: summed over an episode-step's agents, averaged over the
    batch. Averaging keeps gradient magnitudes independent of batch size,
    so the global-norm clip engages on genuinely exploding gradients
    rather than on every large batch."""
    if not batch:
        raise ValueError("batch must be non-empty")
    names = [name for name, _ in params.named_arrays()]
    grads = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
    total = 0.0
    n_gcn = len(params.gcn)
    for sample in batch:
        obs_full = _full_obs(params, sample.graph_input.observations)
        a_hat = normalized_adjacency(sample.graph_input.graph)
        cache = _forward(params, obs_full, a_hat)

        targets = np.asarray(sample.target_policies, dtype=np.float64)
        mask = sample.target_mask
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
        ce, dlogits, _ = softmax_cross_entropy(
            cache["logits"], targets, params.temperature, row_weights=mask
        )
        v_target = np.asarray(sample.target_values, dtype=np.float64).reshape(-1, 1)
        v_err = cache["values"] - v_target
        v_sq = v_err * v_err
        dvalues = 2.0 * v_err
        if mask is not None:
            v_sq = v_sq * mask[:, None]
            dvalues = dvalues * mask[:, None]
        total += ce + float(np.sum(v_sq))

        h_top = cache["gcn_h"][-1]
        # policy head
        grads["policy_w2"] += cache["p_hidden"].T @ dlogits
        grads["policy_b2"] += dlogits.sum(axis=0, keepdims=True)
        dp_hidden = dlogits @ params.policy_w2.T
        dp_pre = relu_backward(dp_hidden, cache["p_pre"])
        grads["policy_w1"] += h_top.T @ dp_pre
        grads["policy_b1"] += dp_pre.sum(axis=0, keepdims=True)
        dh = dp_pre @ params.policy_w1.T
        # value head
        grads["value_w2"] += cache["v_hidden"].T @ dvalues
        grads["value_b2"] += dvalues.sum(axis=0, keepdims=True)
        dv_hidden = dvalues @ params.value_w2.T
        dv_pre = relu_backward(dv_hidden, cache["v_pre"])
        grads["value_w1"] += h_top.T @ dv_pre
        grads["value_b1"] += dv_pre.sum(axis=0, keepdims=True)
        dh = dh + dv_pre @ params.value_w1.T
        # GCN stack (a_hat is symmetric)
        for l in range(n_gcn - 1, -1, -1):
            dpre = relu_backward(dh, cache["gcn_pre"][l])
            dprop = a_hat @ dpre
            grads[f"gcn{l}"] += cache["gcn_h"][l].T @ dprop
            dh = dprop @ params.gcn[l].T
    scale = 1.0 / len(batch)
    return total * scale, Gradients(
        arrays=[grads[name] * scale for name in names]
    )


def apply_update(params, grads, lr=DEFAULT_LR, clip_norm=GRAD_CLIP_NORM):
    arrays = [arr for _, arr in params.named_arrays()]
    if len(grads.arrays) != len(arrays):
        raise ShapeMismatch("gradient count does not match parameter count")
    for a, g in zip(arrays, grads.arrays):
        if a.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} for parameter {a.shape}")
    clipped, _ = clip_by_global_norm(grads.arrays, clip_norm)
    return params.replace_arrays([a - lr * g for a, g in zip(arrays, clipped)])


def save(params):
    """Versioned binary checkpoint; round-trips bit-exactly."""
    mats = [arr for _, arr in params.named_arrays()]
    head = struct.pack(
        "<IdII",
        CHECKPOINT_VERSION,
        params.temperature,
        params.obs_dim,
        len(params.gcn),
    )
    shape_table = struct.pack("<I", len(mats)) + b"".join(
        struct.pack("<II", m.shape[0], m.shape[1]) for m in mats
    )
    data = b"".join(np.ascontiguousarray(m, dtype="<f8").tobytes() for m in mats)
    return CHECKPOINT_MAGIC + head + shape_table + data


def load(blob, expected_gcn_layers=None):
    if len(blob) < len(CHECKPOINT_MAGIC) + 24 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpoint("bad magic or truncated header")
    off = len(CHECKPOINT_MAGIC)
    version, temperature, obs_dim, n_gcn = struct.unpack_from("<IdII", blob, off)
    off += struct.calcsize("<IdII")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version}")
    if expected_gcn_layers is not None and n_gcn != expected_gcn_layers:
        raise VersionMismatch(
            f"checkpoint has {n_gcn} GCN layers, expected {expected_gcn_layers}"
        )
    try:
        (n_mats,) = struct.unpack_from("<I", blob, off)
        off += 4
        shapes = []
        for _ in range(n_mats):
            shapes.append(struct.unpack_from("<II", blob, off))
            off += 8
    except struct.error as exc:
        raise CorruptCheckpoint("truncated shape table") from exc
    mats = []
    for rows, cols in shapes:
        nbytes = rows * cols * 8
        chunk = blob[off : off + nbytes]
        if len(chunk) != nbytes:
            raise CorruptCheckpoint("truncated parameter data")
        mats.append(np.frombuffer(chunk, dtype="<f8").reshape(rows, cols).copy())
        off += nbytes
    if len(blob) != off:
        raise CorruptCheckpoint("trailing bytes after parameter data")
    if n_mats != n_gcn + 8:
        raise CorruptCheckpoint("matrix count does not match layer count")
    template = ModelParams(
        gcn=mats[:n_gcn],
        policy_w1=mats[n_gcn],
        policy_b1=mats[n_gcn + 1],
        policy_w2=mats[n_gcn + 2],
        policy_b2=mats[n_gcn + 3],
        value_w1=mats[n_gcn + 4],
        value_b1=mats[n_gcn + 5],
        value_w2=mats[n_gcn + 6],
        value_b2=mats[n_gcn + 7],
        temperature=temperature,
        obs_dim=obs_dim,
    )
    return template
