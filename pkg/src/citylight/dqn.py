"""Two-headed MLP Q-network and the double-DQN trainer, written against numpy.

The network maps a state to two 8-vectors: Q-values and predicted immediate
rewards, one per phase. Training minimises the smooth-L1 loss of the
taken action's Q-value against the double-DQN target plus the smooth-L1 loss
of its predicted reward against the observed reward.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

N_ACTIONS = 8
CKPT_MAGIC = b"CLQN"
CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.8
    lr: float = 5e-5
    model_update_freq: int = 1
    target_update_freq: int = 17
    epsilon: float = 0.2
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    green_sec: float = 20.0
    batch_size: int = 64
    replay_capacity: int = 65536
    hidden: tuple[int, ...] = (128, 128)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.epsilon_min > self.epsilon:
            raise ValueError("epsilon_min must not exceed epsilon")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


@dataclass
class QNetwork:
    """MLP ``n_in -> hidden... -> (q: n_actions, r_hat: n_actions)`` with ReLU hidden units.

    ``input_scale`` is a fixed element-wise multiplier applied to the input.
    """

    weights: list[np.ndarray]  # hidden layers, then q head, then reward head
    biases: list[np.ndarray]
    input_scale: np.ndarray

    @classmethod
    def init(cls, n_in: int, hidden=(128, 128), n_actions: int = N_ACTIONS, rng=None, input_scale=None):
        rng = np.random.default_rng(rng)
        sizes = [n_in, *hidden]
        weights, biases = [], []
        for a, b in zip(sizes, sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))
            biases.append(np.zeros(b))
        for _ in range(2):
            weights.append(rng.normal(0.0, np.sqrt(1.0 / sizes[-1]), size=(sizes[-1], n_actions)))
            biases.append(np.zeros(n_actions))
        scale = np.ones(n_in) if input_scale is None else np.asarray(input_scale, dtype=np.float64).copy()
        return cls(weights, biases, scale)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights) - 2

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.input_scale.copy())

    def load_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def forward(net: QNetwork, s: np.ndarray, cache: list | None = None):
    """Q-values and predicted rewards for a state (8,) or a batch (B, 8)."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != net.n_in:
        raise ValueError(f"state dimension {s.shape[-1]} != network input {net.n_in}")
    h = s * net.input_scale
    if cache is not None:
        cache.append(h)
    for W, b in zip(net.weights[:-2], net.biases[:-2]):
        z = h @ W + b
        h = np.maximum(z, 0.0)
        if cache is not None:
            cache.append(z)
            cache.append(h)
    q = h @ net.weights[-2] + net.biases[-2]
    r = h @ net.weights[-1] + net.biases[-1]
    return q, r


def huber(e: np.ndarray) -> np.ndarray:
    a = np.abs(e)
    return np.where(a < 1.0, 0.5 * e * e, a - 0.5)


def huber_grad(e: np.ndarray) -> np.ndarray:
    return np.clip(e, -1.0, 1.0)


def masked_argmax(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Argmax over valid actions along the last axis; ties go to the lowest index."""
    return np.argmax(np.where(mask, q, -np.inf), axis=-1)


def loss_and_grads(net: QNetwork, states, actions, q_targets, r_targets):
    """Two-headed Huber loss and its gradients (same order as ``net.params()``)."""
    cache: list = []
    q, r = forward(net, states, cache)
    B = states.shape[0]
    idx = np.arange(B)
    eq = q[idx, actions] - q_targets
    er = r[idx, actions] - r_targets
    q_loss = float(huber(eq).mean())
    r_loss = float(huber(er).mean())
    dq = np.zeros_like(q)
    dr = np.zeros_like(r)
    dq[idx, actions] = huber_grad(eq) / B
    dr[idx, actions] = huber_grad(er) / B
    h_last = cache[-1]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    grads_w[-2], grads_b[-2] = h_last.T @ dq, dq.sum(axis=0)
    grads_w[-1], grads_b[-1] = h_last.T @ dr, dr.sum(axis=0)
    dh = dq @ net.weights[-2].T + dr @ net.weights[-1].T
    for layer in range(net.n_hidden_layers - 1, -1, -1):
        z = cache[1 + 2 * layer]
        h_in = cache[2 * layer]
        dz = dh * (z > 0.0)
        grads_w[layer] = h_in.T @ dz
        grads_b[layer] = dz.sum(axis=0)
        dh = dz @ net.weights[layer].T
    grads = [g for pair in zip(grads_w, grads_b) for g in pair]
    return q_loss, r_loss, grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray  # 0-based action indices
    rewards: np.ndarray
    next_states: np.ndarray
    next_masks: np.ndarray
    terminal: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO experience store with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, n_actions: int = N_ACTIONS):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_masks = np.ones((capacity, n_actions), dtype=bool)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action: int, reward: float, next_state, next_mask=None, terminal: bool = False) -> None:
        """Store one transition; ``action`` is a phase id in 1..8."""
        i = self.ptr
        self.states[i] = state
        self.actions[i] = action - 1
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.next_masks[i] = True if next_mask is None else next_mask
        self.terminal[i] = terminal
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return self.take(idx)

    def take(self, idx) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx],
                     self.next_masks[idx], self.terminal[idx])


def double_dqn_targets(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float) -> np.ndarray:
    q_next_online, _ = forward(net, batch.next_states)
    a_star = masked_argmax(q_next_online, batch.next_masks)
    q_next_target, _ = forward(target_net, batch.next_states)
    boot = q_next_target[np.arange(len(a_star)), a_star]
    return batch.rewards + gamma * np.where(batch.terminal, 0.0, boot)


class Trainer:
    """Owns the online/target pair, the optimiser and the update counter."""

    def __init__(self, net: QNetwork, cfg: TrainConfig):
        self.net = net
        self.target = net.copy()
        self.cfg = cfg
        self.opt = Adam(net.params(), cfg.lr, cfg.adam_betas, cfg.adam_eps)
        self.updates = 0

    def train_step(self, batch: Batch) -> tuple[float, float]:
        if len(batch.actions) == 0:
            raise ValueError("empty batch")
        y = double_dqn_targets(self.net, self.target, batch, self.cfg.gamma)
        q_loss, r_loss, grads = loss_and_grads(self.net, batch.states, batch.actions, y, batch.rewards)
        if not (np.isfinite(q_loss) and np.isfinite(r_loss)):
            raise FloatingPointError(
                f"non-finite loss at update {self.updates}: q_loss={q_loss} r_loss={r_loss} "
                f"max|y|={np.abs(y).max():.3g} max|r|={np.abs(batch.rewards).max():.3g}"
            )
        self.opt.step(grads)
        self.updates += 1
        sync_target(self.net, self.target, self.updates, self.cfg)
        return q_loss, r_loss


def train_step(net: QNetwork, target_net: QNetwork, batch: Batch, cfg: TrainConfig, opt: Adam | None = None):
    """One double-DQN update of ``net``; returns ``(net, (q_loss, r_loss))``."""
    opt = opt or Adam(net.params(), cfg.lr, cfg.adam_betas, cfg.adam_eps)
    y = double_dqn_targets(net, target_net, batch, cfg.gamma)
    q_loss, r_loss, grads = loss_and_grads(net, batch.states, batch.actions, y, batch.rewards)
    if not (np.isfinite(q_loss) and np.isfinite(r_loss)):
        raise FloatingPointError(f"non-finite loss: q_loss={q_loss} r_loss={r_loss}")
    opt.step(grads)
    return net, (q_loss, r_loss)


def sync_target(net: QNetwork, target_net: QNetwork, step: int, cfg: TrainConfig) -> QNetwork:
    """Hard-copy online parameters into the target every ``target_update_freq`` updates."""
    if step > 0 and step % cfg.target_update_freq == 0:
        target_net.load_from(net)
    return target_net


def act(net: QNetwork, s, mask, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy phase (1..8) over the valid actions in ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise ValueError("no valid action")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(valid[rng.integers(valid.size)]) + 1
    q, _ = forward(net, s)
    return int(masked_argmax(q, mask)) + 1


def ensemble_q(nets: list[QNetwork], s) -> np.ndarray:
    return np.mean([forward(n, s)[0] for n in nets], axis=0)


def ensemble_act(nets: list[QNetwork], s, mask) -> int:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no valid action")
    return int(masked_argmax(ensemble_q(nets, s), mask)) + 1


def hybrid_act(nets: list[QNetwork], rule_decision: int | None, s, mask) -> int:
    """Adopt the rule agent's blocked-lane decision when it fired, else the ensemble's."""
    if rule_decision is not None and np.asarray(mask, dtype=bool)[rule_decision - 1]:
        return int(rule_decision)
    return ensemble_act(nets, s, mask)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, net: QNetwork, cfg: TrainConfig | None = None, meta: dict | None = None) -> None:
    """Versioned binary: header JSON, then each array as (ndim, shape, float64 row-major), then config hash."""
    cfg = cfg or TrainConfig()
    arrays = [net.input_scale] + net.params()
    header = json.dumps({"n_hidden_layers": net.n_hidden_layers, "config": cfg.to_dict(), "meta": meta or {}},
                        sort_keys=True).encode()
    out = io.BytesIO()
    out.write(CKPT_MAGIC)
    out.write(struct.pack("<HI", CKPT_VERSION, len(header)))
    out.write(header)
    out.write(struct.pack("<I", len(arrays)))
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        out.write(struct.pack("<B", a.ndim))
        out.write(struct.pack(f"<{a.ndim}I", *a.shape))
        out.write(a.tobytes(order="C"))
    out.write(cfg.digest())
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def load_checkpoint(path) -> tuple[QNetwork, TrainConfig, dict]:
    data = open(path, "rb").read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    header = json.loads(data[off:off + hlen])
    off += hlen
    (n_arr,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = []
    for _ in range(n_arr):
        (nd,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
        n = int(np.prod(shape)) if nd else 1
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy())
        off += 8 * n
    cfgd = header["config"]
    cfgd["hidden"] = tuple(cfgd["hidden"])
    cfgd["adam_betas"] = tuple(cfgd["adam_betas"])
    cfg = TrainConfig(**cfgd)
    if data[off:off + 32] != cfg.digest():
        raise ValueError(f"{path}: config hash mismatch")
    params = arrays[1:]
    net = QNetwork(params[0::2], params[1::2], arrays[0])
    return net, cfg, header.get("meta", {})
