"""Deep Q-learning with experience replay (all-numpy, deterministic).

The value network is a plain feedforward net over reciprocal-rank state
vectors. Episodes carry a single delayed reward of +/-1 at the final
step; intermediate steps pay 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nets import Mlp

log = logging.getLogger(__name__)


class TrainingDivergenceError(RuntimeError):
    """Loss became non-finite during a gradient step."""


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: int
    next_state: np.ndarray | None
    terminal: bool

    def __post_init__(self):
        if self.reward not in (-1, 0, 1):
            raise ValueError(f"reward must be in {{-1, 0, +1}}, got {self.reward}")
        if self.terminal != (self.reward != 0):
            raise ValueError("delayed-reward scheme: terminal iff reward != 0")
        if self.terminal:
            self.next_state = None


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform with-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._pos] = tr
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def state_arrays(self) -> dict:
        """Snapshot for checkpointing."""
        n = len(self._items)
        if n == 0:
            return {"n": 0, "pos": self._pos}
        dim = self._items[0].state.size
        states = np.zeros((n, dim))
        nexts = np.zeros((n, dim))
        actions = np.zeros(n, dtype=np.int64)
        rewards = np.zeros(n, dtype=np.int64)
        terminals = np.zeros(n, dtype=bool)
        for i, tr in enumerate(self._items):
            states[i] = tr.state
            actions[i] = tr.action
            rewards[i] = tr.reward
            terminals[i] = tr.terminal
            if tr.next_state is not None:
                nexts[i] = tr.next_state
        return {
            "n": n, "pos": self._pos, "states": states, "next_states": nexts,
            "actions": actions, "rewards": rewards, "terminals": terminals,
        }

    @classmethod
    def from_state(cls, capacity: int, snap: dict) -> "ReplayBuffer":
        buf = cls(capacity)
        buf._pos = int(snap["pos"])
        for i in range(int(snap["n"])):
            terminal = bool(snap["terminals"][i])
            buf._items.append(
                Transition(
                    state=np.array(snap["states"][i]),
                    action=int(snap["actions"][i]),
                    reward=int(snap["rewards"][i]),
                    next_state=None if terminal else np.array(snap["next_states"][i]),
                    terminal=terminal,
                )
            )
        return buf


@dataclass(frozen=True)
class DqnConfig:
    episodes: int = 50_000
    gamma: float = 0.95
    lr: float = 1e-3
    lr_end: float | None = None       # linear lr anneal target; None = constant
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_frac: float = 0.3   # fraction of episodes over which epsilon anneals
    batch_size: int = 64
    target_sync: int = 1000           # gradient steps between target-net syncs
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (128, 128)
    seed: int = 0
    checkpoint_every: int = 0         # episodes; 0 disables periodic checkpoints
    select_every: int = 0             # episodes between greedy evals; 0 keeps final weights
    select_episodes: int = 200        # fixed held-out episodes per greedy eval

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def lr_at(self, episode: int) -> float:
        if self.lr_end is None:
            return self.lr
        t = min(1.0, episode / max(1, self.episodes - 1))
        return self.lr + t * (self.lr_end - self.lr)

    def epsilon_at(self, episode: int) -> float:
        decay_eps = max(1, int(self.epsilon_decay_frac * self.episodes))
        t = min(1.0, episode / decay_eps)
        return self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)


def q_forward(net: Mlp, state: np.ndarray) -> np.ndarray:
    return net.forward(state)


def td_target(tr: Transition, target_net: Mlp, gamma: float) -> float:
    if tr.terminal:
        return float(tr.reward)
    return float(tr.reward) + gamma * float(np.max(q_forward(target_net, tr.next_state)))


def train_step(net: Mlp, target_net: Mlp, batch: list[Transition], lr: float, gamma: float) -> float:
    """One SGD step on the mean squared TD error of the taken actions.

    Returns the pre-step loss.
    """
    if not batch:
        raise ValueError("empty batch")
    states = np.stack([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch])
    targets = np.array([td_target(tr, target_net, gamma) for tr in batch])
    q, cache = net.forward_cached(states)
    taken = q[np.arange(len(batch)), actions]
    errors = taken - targets
    loss = float(np.mean(errors**2))
    if not np.isfinite(loss):
        raise TrainingDivergenceError(
            f"non-finite loss (max |q| = {np.abs(q).max():.3g}); lower the learning rate"
        )
    d_q = np.zeros_like(q)
    d_q[np.arange(len(batch)), actions] = 2.0 * errors / len(batch)
    grads_w, grads_b = net.backward(cache, d_q)
    net.sgd_step(grads_w, grads_b, lr)
    return loss


def epsilon_greedy(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Explore uniformly with probability eps, otherwise greedy (ties: lowest)."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(0, q.size))
    return int(np.argmax(q))


@dataclass
class EpisodeLogRow:
    episode: int
    epsilon: float
    reward: int
    loss: float
    mrr_window: float

    def as_tuple(self):
        return (self.episode, self.epsilon, self.reward, self.loss, self.mrr_window)


LOG_HEADER = ("episode", "epsilon", "reward", "loss", "mrr_window")


def save_checkpoint(path, net: Mlp, target: Mlp, buffer: ReplayBuffer,
                    episode: int, steps: int, log_rows: list[EpisodeLogRow],
                    rr_window: list[float]) -> None:
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"], arrays[f"b{i}"] = w, b
    for i, (w, b) in enumerate(zip(target.weights, target.biases)):
        arrays[f"tw{i}"], arrays[f"tb{i}"] = w, b
    snap = buffer.state_arrays()
    for k, v in snap.items():
        arrays[f"buf_{k}"] = np.asarray(v)
    arrays["layers"] = np.array(net.layers)
    arrays["meta"] = np.array([episode, steps, net.seed])
    arrays["log"] = np.array([r.as_tuple() for r in log_rows], dtype=np.float64).reshape(len(log_rows), 5)
    arrays["rr_window"] = np.array(rr_window, dtype=np.float64)
    np.savez(path, **arrays)


def load_checkpoint(path, capacity: int):
    data = np.load(path, allow_pickle=False)
    layers = [int(x) for x in data["layers"]]
    episode, steps, seed = (int(x) for x in data["meta"])
    n_layers = len(layers) - 1
    net = Mlp(layers, seed=seed,
              weights=[data[f"w{i}"] for i in range(n_layers)],
              biases=[data[f"b{i}"] for i in range(n_layers)])
    target = Mlp(layers, seed=seed,
                 weights=[data[f"tw{i}"] for i in range(n_layers)],
                 biases=[data[f"tb{i}"] for i in range(n_layers)])
    snap = {k[4:]: data[k] for k in data.files if k.startswith("buf_")}
    buffer = ReplayBuffer.from_state(capacity, snap)
    log_rows = [
        EpisodeLogRow(int(r[0]), float(r[1]), int(r[2]), float(r[3]), float(r[4]))
        for r in data["log"]
    ]
    rr_window = [float(x) for x in data["rr_window"]]
    return net, target, buffer, episode, steps, log_rows, rr_window


_SELECT_EPISODE_BASE = 1_000_000_000  # held-out episode indices for selection evals


def greedy_eval(env, net, episodes: int, base: int = _SELECT_EPISODE_BASE) -> float:
    """Mean reciprocal rank of the greedy policy over fixed episodes."""
    total = 0.0
    for i in range(episodes):
        state = env.reset(episode=base + i)
        terminal = False
        while not terminal:
            state, _, terminal = env.step(int(np.argmax(q_forward(net, state))))
        total += 1.0 / env.last_rank
    return total / episodes


def train_dqn(env, cfg: DqnConfig, resume_from=None, checkpoint_path=None):
    """Train a Q-network on `env` (reset/step protocol) for cfg.episodes.

    Fully deterministic for a fixed (env seeds, cfg): every episode draws
    its exploration and replay-sampling randomness from a stream keyed by
    (cfg.seed, episode index), so a resumed run continues bit-identically.

    Returns (net, log_rows).
    """
    if resume_from is not None:
        net, target, buffer, start_ep, steps, log_rows, rr_window = load_checkpoint(
            resume_from, cfg.buffer_capacity
        )
    else:
        state_dim = env.state_dim
        net = Mlp([state_dim, *cfg.hidden, env.n_actions], seed=cfg.seed)
        target = net.copy()
        buffer = ReplayBuffer(cfg.buffer_capacity)
        start_ep, steps = 0, 0
        log_rows = []
        rr_window = []
    best_net, best_score = None, -1.0

    for ep in range(start_ep, cfg.episodes):
        eps = cfg.epsilon_at(ep)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD09, ep]))
        state = env.reset(episode=ep)
        terminal = False
        last_loss = float("nan")
        ep_reward = 0
        while not terminal:
            action = epsilon_greedy(q_forward(net, state), eps, rng)
            next_state, reward, terminal = env.step(action)
            buffer.add(
                Transition(
                    state=state, action=action, reward=reward,
                    next_state=None if terminal else next_state, terminal=terminal,
                )
            )
            state = next_state
            ep_reward = reward
            if len(buffer) >= cfg.batch_size:
                batch = buffer.sample(cfg.batch_size, rng)
                last_loss = train_step(net, target, batch, cfg.lr_at(ep), cfg.gamma)
                steps += 1
                if steps % cfg.target_sync == 0:
                    target = net.copy()
        rr_window.append(1.0 / env.last_rank)
        if len(rr_window) > 100:
            rr_window.pop(0)
        log_rows.append(
            EpisodeLogRow(
                episode=ep, epsilon=eps, reward=ep_reward, loss=last_loss,
                mrr_window=float(np.mean(rr_window)),
            )
        )
        if cfg.select_every and (ep + 1) % cfg.select_every == 0:
            score = greedy_eval(env, net, cfg.select_episodes)
            if score > best_score:
                best_net, best_score = net.copy(), score
        if checkpoint_path and cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, net, target, buffer, ep + 1, steps,
                            log_rows, rr_window)

    if checkpoint_path:
        save_checkpoint(checkpoint_path, net, target, buffer, cfg.episodes, steps,
                        log_rows, rr_window)
    if best_net is not None:
        # keep the best periodically-evaluated weights, not the last ones
        return best_net, log_rows
    return net, log_rows
