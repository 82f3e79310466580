"""Actor-critic placement optimizer trained with PPO.

The task graph is embedded once by a frozen graph-convolution layer
``H = relu(L_hat @ X @ W_g)``.  A two-layer actor maps the embedding to a
per-node diagonal Gaussian over continuous (x, y) in [-1, 1]; samples are
discretized onto the mesh and made injective by the clockwise ring resolver.
Episodes are single-step (one action is one complete placement), so the
critic is a learned baseline and the advantage is ``r - V(s)``.

Everything is plain numpy with explicit backward passes; gradients are
checked against central finite differences in the test suite.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .mesh import Mesh, Placement, cost_from_coords
from .placement import resolve_array, ring_offsets, traffic_priority, zigzag_coords
from .taskgraph import TaskGraph

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
N_FEATURES = 5
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RLConfig:
    embed_dim: int = 32
    hidden: int = 64
    clip_eps: float = 0.1
    batch_size: int = 256
    lr: float = 0.005
    ppo_epochs: int = 10
    grad_clip: float = 0.5
    episodes: int = 200
    sigma_min: float = 0.05
    reward_clip: float = 10.0
    optimizer: str = "sgd"  # "sgd" | "adam"
    # "graph": FC1 reads the flattened (n * embed_dim) embedding, FC2 emits 4 values per node.
    # "node": one MLP shared by all nodes (embed_dim -> hidden -> 4).
    actor: str = "graph"
    normalize_advantage: bool = False
    pretrain_encoder: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.actor not in ("graph", "node"):
            raise ValueError(f"actor must be 'graph' or 'node', got {self.actor!r}")
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be > 0")
        if self.batch_size < 1 or self.ppo_epochs < 0 or self.episodes < 0:
            raise ValueError("batch_size >= 1, ppo_epochs >= 0 and episodes >= 0 required")


# --------------------------------------------------------------------------- state


@dataclass
class StateEncoding:
    adjacency: np.ndarray  # bytes-weighted, symmetric
    operator: np.ndarray  # D^-1/2 (A_bin + I) D^-1/2
    features: np.ndarray  # (n, 5)
    embedding: np.ndarray  # (n, embed_dim)


def node_feature_matrix(graph: TaskGraph) -> np.ndarray:
    """Columns: multicast, degree_in, degree_out, bytes_in, bytes_out; the last four min-max scaled."""
    X = np.array(
        [[nd.multicast, nd.degree_in, nd.degree_out, nd.bytes_in, nd.bytes_out] for nd in graph.nodes],
        dtype=np.float64,
    ).reshape(-1, N_FEATURES)
    for j in range(1, N_FEATURES):
        col = X[:, j]
        lo, hi = col.min(), col.max()
        X[:, j] = (col - lo) / (hi - lo) if hi > lo else 0.0
    return X


def normalized_operator(graph: TaskGraph) -> tuple[np.ndarray, np.ndarray]:
    """Bytes-weighted adjacency and the symmetric normalized operator over its binary support."""
    n = graph.n
    A = np.zeros((n, n), dtype=np.float64)
    for e in graph.edges:
        A[e.src, e.dst] += e.bytes
        A[e.dst, e.src] += e.bytes
    B = (A > 0).astype(np.float64)
    # zero-byte edges still connect
    for e in graph.edges:
        B[e.src, e.dst] = B[e.dst, e.src] = 1.0
    B += np.eye(n)
    d = 1.0 / np.sqrt(B.sum(axis=1))
    return A, d[:, None] * B * d[None, :]


def init_encoder(rng: np.random.Generator, embed_dim: int = 32) -> np.ndarray:
    bound = math.sqrt(6.0 / (N_FEATURES + embed_dim))
    return rng.uniform(-bound, bound, size=(N_FEATURES, embed_dim))


def pretrain_encoder(
    graph: TaskGraph, W_g: np.ndarray, rng: np.random.Generator, steps: int = 500, lr: float = 0.05
) -> np.ndarray:
    """Fit W_g as the encoder of a one-layer autoencoder on the graph features."""
    _, L = normalized_operator(graph)
    X = node_feature_matrix(graph)
    LX = L @ X
    W = W_g.copy()
    D = rng.normal(0.0, 0.1, size=(W.shape[1], N_FEATURES))
    n = max(graph.n, 1)
    for _ in range(steps):
        pre = LX @ W
        H = np.maximum(pre, 0.0)
        err = H @ D - X
        gD = H.T @ err * (2.0 / n)
        gH = err @ D.T * (2.0 / n)
        gW = LX.T @ (gH * (pre > 0))
        W -= lr * gW
        D -= lr * gD
    return W


def encode_state(graph: TaskGraph, W_g: np.ndarray) -> StateEncoding:
    if graph.n < 1:
        raise ValueError("cannot encode an empty graph")
    A, L = normalized_operator(graph)
    X = node_feature_matrix(graph)
    H = np.maximum(L @ X @ W_g, 0.0)
    return StateEncoding(adjacency=A, operator=L, features=X, embedding=H)


# --------------------------------------------------------------------------- networks

ACTOR_KEYS = ("W1", "b1", "W2", "b2")
CRITIC_KEYS = ("V1", "c1", "V2", "c2")


def init_params(
    rng: np.random.Generator, embed_dim: int, hidden: int, n_nodes: int = 1, actor: str = "node"
) -> dict[str, np.ndarray]:
    def glorot(fan_in, fan_out):
        b = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-b, b, size=(fan_in, fan_out))

    rows = n_nodes if actor == "graph" else 1
    p = {
        "W1": glorot(embed_dim * rows, hidden),
        "b1": np.zeros(hidden),
        "W2": glorot(hidden, 4 * rows) * 0.1,
        "b2": np.zeros(4 * rows),
        "V1": glorot(embed_dim, hidden),
        "c1": np.zeros(hidden),
        "V2": glorot(hidden, 1)[:, 0],
        "c2": np.zeros(1),
    }
    # sigma starts around 0.5 of the [-1, 1] box
    p["b2"].reshape(rows, 4)[:, [1, 3]] = math.log(math.expm1(0.45))
    return p


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def actor_forward(params: dict, H: np.ndarray, sigma_min: float = 0.05):
    """Per-node (mu, sigma), each (n, 2) with columns (x, y), plus a backprop cache.

    The actor kind is implied by the shape of ``W1``.
    """
    n = H.shape[0]
    flat = params["W1"].shape[0] != H.shape[1] or params["W2"].shape[1] != 4
    inp = H.reshape(1, -1) if flat else H
    pre1 = inp @ params["W1"] + params["b1"]
    h1 = np.maximum(pre1, 0.0)
    out = (h1 @ params["W2"] + params["b2"]).reshape(n, 4)  # columns: mu_x, s_x, mu_y, s_y
    mu = np.tanh(out[:, [0, 2]])
    sigma = _softplus(out[:, [1, 3]]) + sigma_min
    cache = (inp, pre1, h1, out, mu)
    return mu, sigma, cache


def actor_backward(params: dict, cache, d_mu: np.ndarray, d_sigma: np.ndarray) -> dict[str, np.ndarray]:
    inp, pre1, h1, out, mu = cache
    d_out = np.empty_like(out)
    d_out[:, [0, 2]] = d_mu * (1.0 - mu**2)
    d_out[:, [1, 3]] = d_sigma * _sigmoid(out[:, [1, 3]])
    d_out = d_out.reshape(h1.shape[0], -1)
    g = {"W2": h1.T @ d_out, "b2": d_out.sum(axis=0)}
    d_h1 = d_out @ params["W2"].T
    d_pre1 = d_h1 * (pre1 > 0)
    g["W1"] = inp.T @ d_pre1
    g["b1"] = d_pre1.sum(axis=0)
    return g


def critic_forward(params: dict, H: np.ndarray):
    pooled = H.mean(axis=0)
    pre = pooled @ params["V1"] + params["c1"]
    u = np.maximum(pre, 0.0)
    v = float(u @ params["V2"] + params["c2"][0])
    return v, (pooled, pre, u)


def critic_backward(params: dict, cache, d_v: float) -> dict[str, np.ndarray]:
    pooled, pre, u = cache
    d_pre = d_v * params["V2"] * (pre > 0)
    return {
        "V2": d_v * u,
        "c2": np.array([d_v]),
        "V1": np.outer(pooled, d_pre),
        "c1": d_pre,
    }


def gaussian_log_prob(a: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Sum over nodes and axes of the diagonal Gaussian log-density; ``a`` is (B, n, 2)."""
    z = (a - mu) / sigma
    return (-0.5 * z**2 - np.log(sigma) - 0.5 * LOG_2PI).sum(axis=(1, 2))


# --------------------------------------------------------------------------- actions / reward


@dataclass
class ActionSample:
    raw: np.ndarray  # (B, n, 2) pre-clip Gaussian draws
    log_prob: np.ndarray  # (B,)
    targets: np.ndarray  # (B, n, 2) discretized cells, may collide
    coords: np.ndarray  # (B, n, 2) after conflict resolution


def discretize(a: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Clip to [-1, 1] and map each axis onto W (resp. H) equal-width bins."""
    a = np.clip(a, -1.0, 1.0)
    bx = np.minimum(mesh.width - 1, np.floor((a[..., 0] + 1.0) / 2.0 * mesh.width)).astype(np.int64)
    by = np.minimum(mesh.height - 1, np.floor((a[..., 1] + 1.0) / 2.0 * mesh.height)).astype(np.int64)
    return np.stack([bx, by], axis=-1)


def sample_action(
    mu: np.ndarray,
    sigma: np.ndarray,
    mesh: Mesh,
    rng: np.random.Generator,
    order: list[int],
    batch: int = 1,
    rings: list | None = None,
) -> ActionSample:
    n = mu.shape[0]
    raw = mu[None] + sigma[None] * rng.standard_normal((batch, n, 2))
    logp = gaussian_log_prob(raw, mu, sigma)
    targets = discretize(raw, mesh)
    rings = rings if rings is not None else ring_offsets(mesh)
    coords = np.stack([resolve_array(t, order, mesh, rings) for t in targets])
    return ActionSample(raw=raw, log_prob=logp, targets=targets, coords=coords)


def reward(cost: float, baseline_cost: float, clip: float = 10.0) -> float:
    """Scaled cost saving relative to the baseline, clipped to [-clip, clip]."""
    if baseline_cost <= 0:
        raise ValueError("baseline cost must be > 0")
    return float(np.clip(10.0 * (baseline_cost - cost) / baseline_cost, -clip, clip))


def rewards(costs: np.ndarray, baseline_cost: float, clip: float = 10.0) -> np.ndarray:
    if baseline_cost <= 0:
        raise ValueError("baseline cost must be > 0")
    return np.clip(10.0 * (baseline_cost - np.asarray(costs, dtype=np.float64)) / baseline_cost, -clip, clip)


# --------------------------------------------------------------------------- PPO


@dataclass
class Trajectory:
    actions: np.ndarray  # (B, n, 2) pre-clip
    log_prob_old: np.ndarray  # (B,)
    rewards: np.ndarray  # (B,)
    advantages: np.ndarray  # (B,)


def ppo_losses(params: dict, H: np.ndarray, traj: Trajectory, config: RLConfig, need_grads: bool = True):
    """Clipped-surrogate actor loss and MSE critic loss with their gradients.

    Returns ``(stats, grads)``; ``grads`` holds actor and critic entries.
    """
    mu, sigma, a_cache = actor_forward(params, H, config.sigma_min)
    a = traj.actions
    logp = gaussian_log_prob(a, mu, sigma)
    ratio = np.exp(logp - traj.log_prob_old)
    adv = traj.advantages
    eps = config.clip_eps
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    actor_loss = -float(np.mean(np.minimum(surr1, surr2)))

    v, c_cache = critic_forward(params, H)
    critic_loss = float(np.mean((v - traj.rewards) ** 2))

    stats = {
        "actor_loss": actor_loss,
        "critic_loss": critic_loss,
        "value": v,
        "ratio_mean": float(ratio.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "surr_unclipped": float(np.mean(surr1)),
        "surr_clipped": float(np.mean(surr2)),
    }
    if not need_grads:
        return stats, None

    B = len(adv)
    inside = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    use_unclipped = surr1 <= surr2
    d_ratio = np.where(use_unclipped, adv, np.where(inside, adv, 0.0))
    g_logp = -(d_ratio * ratio) / B  # dL/dlogp_b
    diff = a - mu[None]
    w = g_logp[:, None, None]
    d_mu = (w * diff / sigma**2).sum(axis=0)
    d_sigma = (w * (diff**2 / sigma**3 - 1.0 / sigma)).sum(axis=0)
    grads = actor_backward(params, a_cache, d_mu, d_sigma)
    d_v = 2.0 * float(np.mean(v - traj.rewards))
    grads.update(critic_backward(params, c_cache, d_v))
    return stats, grads


def _clip_grads(grads: dict, keys, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in keys))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for k in keys:
            grads[k] = grads[k] * s
    return norm


class Optimizer:
    def __init__(self, kind: str, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict, keys) -> None:
        if self.kind == "sgd":
            for k in keys:
                params[k] = params[k] - self.lr * grads[k]
            return
        self.t += 1
        for k in keys:
            m = self.m.get(k, np.zeros_like(params[k]))
            v = self.v.get(k, np.zeros_like(params[k]))
            m = self.beta1 * m + (1 - self.beta1) * grads[k]
            v = self.beta2 * v + (1 - self.beta2) * grads[k] ** 2
            self.m[k], self.v[k] = m, v
            mh = m / (1 - self.beta1**self.t)
            vh = v / (1 - self.beta2**self.t)
            params[k] = params[k] - self.lr * mh / (np.sqrt(vh) + self.eps)


def ppo_update(params: dict, H: np.ndarray, traj: Trajectory, config: RLConfig, opt: Optimizer | None = None):
    """``ppo_epochs`` full-batch steps on actor and critic; returns (params, per-epoch stats)."""
    opt = opt or Optimizer(config.optimizer, config.lr)
    params = dict(params)
    history = []
    for epoch in range(config.ppo_epochs):
        stats, grads = ppo_losses(params, H, traj, config)
        if not (math.isfinite(stats["actor_loss"]) and math.isfinite(stats["critic_loss"])):
            raise FloatingPointError(f"non-finite PPO loss at epoch {epoch}: {stats}")
        stats["actor_grad_norm"] = _clip_grads(grads, ACTOR_KEYS, config.grad_clip)
        stats["critic_grad_norm"] = _clip_grads(grads, CRITIC_KEYS, config.grad_clip)
        opt.step(params, grads, ACTOR_KEYS + CRITIC_KEYS)
        history.append(stats)
    return params, history


# --------------------------------------------------------------------------- training loop


@dataclass
class TrainResult:
    placement: Placement
    best_cost: int
    baseline_cost: int
    curve: list[tuple[int, float, int]]  # (episode, batch-mean reward, best cost so far)
    params: dict
    encoder: np.ndarray
    config: RLConfig
    encoder_mode: str = "random"
    history: list[dict] = field(default_factory=list)

    def checkpoint(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "seed": self.config.seed,
            "config": asdict(self.config),
            "encoder_mode": self.encoder_mode,
            "encoder": self.encoder.tolist(),
            "params": {k: np.asarray(v).tolist() for k, v in sorted(self.params.items())},
            "best_cost": self.best_cost,
            "baseline_cost": self.baseline_cost,
            "placement": self.placement.to_dict(),
        }

    def curve_csv(self) -> str:
        lines = ["episode,mean_reward,best_cost"]
        lines += [f"{ep},{r!r},{c}" for ep, r, c in self.curve]
        return "\n".join(lines) + "\n"


def save_checkpoint(result: TrainResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.checkpoint(), indent=1) + "\n")


def load_checkpoint(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    doc["params"] = {k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()}
    doc["encoder"] = np.array(doc["encoder"], dtype=np.float64)
    doc["config"] = RLConfig(**doc["config"])
    doc["placement"] = Placement.from_dict(doc["placement"])
    return doc


def train(graph: TaskGraph, mesh: Mesh, config: RLConfig = RLConfig(), params: dict | None = None) -> TrainResult:
    """Sample, score, PPO-update; return the cheapest placement ever sampled.

    The baseline (zigzag) placement seeds the best-so-far record, so the result
    is never worse than the baseline.
    """
    if graph.n > mesh.n_cores:
        raise ValueError(f"{graph.n} logical cores do not fit on a {mesh} mesh")
    rng = np.random.default_rng(config.seed)
    init_rng, sample_rng = (np.random.default_rng(s) for s in rng.integers(0, 2**63 - 1, size=2))
    W_g = init_encoder(init_rng, config.embed_dim)
    encoder_mode = "random"
    if config.pretrain_encoder:
        W_g = pretrain_encoder(graph, W_g, init_rng)
        encoder_mode = "autoencoder"
    H = encode_state(graph, W_g).embedding
    if params is None:
        params = init_params(init_rng, config.embed_dim, config.hidden, graph.n, config.actor)

    base_xy = zigzag_coords(graph.n, mesh)
    baseline = cost_from_coords(graph, base_xy)
    best_xy, best_cost = base_xy, baseline
    curve: list[tuple[int, float, int]] = []
    history: list[dict] = []
    if config.episodes == 0:
        log.warning("episode budget is 0; returning the zigzag placement")
    if baseline == 0:
        log.warning("zigzag placement already has zero communication cost; nothing to optimize")
        config = replace(config, episodes=0)

    order = traffic_priority(graph)
    rings = ring_offsets(mesh)
    opt = Optimizer(config.optimizer, config.lr)
    for ep in range(config.episodes):
        mu, sigma, _ = actor_forward(params, H, config.sigma_min)
        act = sample_action(mu, sigma, mesh, sample_rng, order, config.batch_size, rings)
        costs = np.array([cost_from_coords(graph, xy) for xy in act.coords], dtype=np.int64)
        r = rewards(costs, baseline, config.reward_clip)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_xy = int(costs[i]), act.coords[i].copy()
        v, _ = critic_forward(params, H)
        adv = r - v
        if config.normalize_advantage and adv.std() > 0:
            adv = (adv - adv.mean()) / adv.std()
        traj = Trajectory(actions=act.raw, log_prob_old=act.log_prob, rewards=r, advantages=adv)
        params, stats = ppo_update(params, H, traj, config, opt)
        if stats:
            history.append(stats[-1])
        curve.append((ep, float(r.mean()), best_cost))

    return TrainResult(
        placement=Placement.from_array(mesh, best_xy),
        best_cost=int(best_cost),
        baseline_cost=int(baseline),
        curve=curve,
        params=params,
        encoder=W_g,
        config=config,
        encoder_mode=encoder_mode,
        history=history,
    )
