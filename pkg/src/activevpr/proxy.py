"""Single-action next-view proxy task.

Every viewpoint gets an exhaustively computed best action (the one whose
single-step episode yields the highest reciprocal rank of the true
place), and a small classifier learns descriptor -> best action. Its
softmax output is the action PDV used as the ego-centric cue.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import bayes, world as world_mod
from .actionset import DEFAULT_N_ACTIONS, action_meters
from .nets import Mlp, softmax
from .pdv import rank_of, uniform

log = logging.getLogger(__name__)


class SkipViewpoint(Exception):
    """Every action would exit the trajectory from this viewpoint."""


def single_step_score(
    world, v: int, meters: int, d, mm: bayes.MotionModel, rng=None
) -> float:
    """VPR score (reciprocal rank of the true place) of one single-action episode."""
    n = world.n_viewpoints
    if v + meters >= n:
        raise ValueError("action exits the trajectory")

    def obs(vp):
        if rng is None:
            return world_mod.expected_observation(world, vp, d)
        return world_mod.observe(world, vp, d, rng)

    belief = uniform(n)
    belief = bayes.perception_update_safe(belief, bayes.lift_place_likelihood(obs(v), world))
    belief = bayes.motion_update(belief, meters, mm)
    belief = bayes.perception_update_safe(belief, bayes.lift_place_likelihood(obs(v + meters), world))
    place_pdv = bayes.viewpoint_to_place(belief, world)
    return 1.0 / rank_of(place_pdv, int(world.place_of[v + meters]))


def best_action_label(
    world,
    v: int,
    d,
    mm: bayes.MotionModel | None = None,
    n_actions: int = DEFAULT_N_ACTIONS,
    rng=None,
) -> int:
    """Exhaustively best action index at viewpoint v; ties pick the smallest.

    Scores use the expected (noise-free) observation unless an rng is
    passed for the sampled variant.
    """
    if mm is None:
        mm = bayes.MotionModel()
    best, best_score = None, -np.inf
    for a in range(n_actions):
        meters = action_meters(a)
        if v + meters >= world.n_viewpoints:
            continue
        score = single_step_score(world, v, meters, d, mm, rng)
        if score > best_score:
            best, best_score = a, score
    if best is None:
        raise SkipViewpoint(f"no action stays inside the trajectory from v={v}")
    return best


@dataclass
class ProxyDataset:
    descriptors: np.ndarray      # (n, descriptor_dim)
    labels: np.ndarray           # (n,) int action indices
    viewpoints: np.ndarray       # (n,) int
    domain_id: str = "train"
    n_actions: int = DEFAULT_N_ACTIONS

    def __len__(self) -> int:
        return len(self.labels)

    def save_csv(self, path) -> None:
        dim = self.descriptors.shape[1] if len(self) else 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["viewpoint", "domain", "label"] + [f"d_{i}" for i in range(dim)]
            )
            for vp, lab, desc in zip(self.viewpoints, self.labels, self.descriptors):
                writer.writerow([int(vp), self.domain_id, int(lab)] + [f"{x:.17g}" for x in desc])

    @classmethod
    def load_csv(cls, path, n_actions: int = DEFAULT_N_ACTIONS) -> "ProxyDataset":
        vps, labels, descs, dom = [], [], [], "train"
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                vps.append(int(row["viewpoint"]))
                dom = row["domain"]
                labels.append(int(row["label"]))
                dcols = sorted(
                    (c for c in row if c.startswith("d_")),
                    key=lambda c: int(c[2:]),
                )
                descs.append([float(row[c]) for c in dcols])
        return cls(
            descriptors=np.array(descs, dtype=np.float64).reshape(len(labels), -1),
            labels=np.array(labels, dtype=np.int64),
            viewpoints=np.array(vps, dtype=np.int64),
            domain_id=dom,
            n_actions=n_actions,
        )


def build_proxy_dataset(
    world,
    d,
    n_samples: int,
    seed: int,
    mm: bayes.MotionModel | None = None,
    n_actions: int = DEFAULT_N_ACTIONS,
) -> ProxyDataset:
    """Uniformly sample labeled (descriptor, best action) records.

    Start viewpoints too close to the end of the trajectory (where the
    longest action would exit) are never drawn.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x9A01, seed]))
    hi = world.n_viewpoints - action_meters(n_actions - 1)  # exclusive
    if hi <= 0:
        raise ValueError("world too short for the action set")
    descs, labels, vps = [], [], []
    label_cache: dict[int, int] = {}
    for _ in range(n_samples):
        v = int(rng.integers(0, hi))
        if v not in label_cache:
            label_cache[v] = best_action_label(world, v, d, mm, n_actions)
        descs.append(world_mod.descriptor(world, v, d, rng))
        labels.append(label_cache[v])
        vps.append(v)
    dim = world.descriptor_dim
    return ProxyDataset(
        descriptors=np.array(descs, dtype=np.float64).reshape(n_samples, dim),
        labels=np.array(labels, dtype=np.int64),
        viewpoints=np.array(vps, dtype=np.int64),
        domain_id=d.id,
        n_actions=n_actions,
    )


@dataclass(frozen=True)
class ProxyTrainConfig:
    hidden: tuple[int, ...] = (64,)
    lr: float = 0.05
    epochs: int = 40
    batch_size: int = 64
    holdout_frac: float = 0.1
    temperature: float = 1.0
    seed: int = 0


@dataclass
class ActionClassifier:
    """Descriptor -> action-PDV model (softmax over the action set)."""

    net: Mlp
    temperature: float = 1.0

    def action_pdv(self, desc: np.ndarray) -> np.ndarray:
        desc = np.asarray(desc, dtype=np.float64)
        if desc.shape[-1] != self.net.in_dim:
            raise ValueError(
                f"descriptor dim {desc.shape[-1]} != expected {self.net.in_dim}"
            )
        return softmax(self.net.forward(desc) / self.temperature)

    def save(self, path) -> None:
        self.net.save(path, extra={"temperature": self.temperature, "kind": "proxy"})

    @classmethod
    def load(cls, path) -> "ActionClassifier":
        import json

        with open(path) as fh:
            data = json.load(fh)
        return cls(net=Mlp.from_dict(data), temperature=float(data.get("temperature", 1.0)))


def ilc(clf: ActionClassifier, desc: np.ndarray) -> np.ndarray:
    """Action PDV from a scene descriptor."""
    return clf.action_pdv(desc)


def cross_entropy_loss_and_grads(net: Mlp, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of softmax(logits) plus backprop gradients."""
    logits, cache = net.forward_cached(X)
    probs = softmax(logits)
    n = X.shape[0]
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    grads_w, grads_b = net.backward(cache, d_logits)
    return loss, grads_w, grads_b


@dataclass
class TrainingReport:
    holdout_accuracy: float
    train_accuracy: float
    losses: list[float] = field(default_factory=list)
    degenerate: bool = False


def train_action_classifier(
    ds: ProxyDataset, cfg: ProxyTrainConfig | None = None
) -> tuple[ActionClassifier, TrainingReport]:
    """Mini-batch gradient descent on cross-entropy; deterministic per seed."""
    if cfg is None:
        cfg = ProxyTrainConfig()
    if len(ds) == 0:
        raise ValueError("empty proxy dataset")
    rng = np.random.default_rng(np.random.SeedSequence([0x9A02, cfg.seed]))
    dim = ds.descriptors.shape[1]
    net = Mlp([dim, *cfg.hidden, ds.n_actions], seed=cfg.seed)
    clf = ActionClassifier(net=net, temperature=cfg.temperature)

    if np.unique(ds.labels).size < 2:
        log.warning("proxy dataset has a single label class; classifier is trivial")
        report = TrainingReport(holdout_accuracy=1.0, train_accuracy=1.0, degenerate=True)
        return clf, report

    n = len(ds)
    perm = rng.permutation(n)
    n_hold = max(1, int(round(cfg.holdout_frac * n))) if n > 1 else 0
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    Xtr, ytr = ds.descriptors[train_idx], ds.labels[train_idx]
    Xho, yho = ds.descriptors[hold_idx], ds.labels[hold_idx]

    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(ytr))
        for start in range(0, len(ytr), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, gw, gb = cross_entropy_loss_and_grads(net, Xtr[idx], ytr[idx])
            net.sgd_step(gw, gb, cfg.lr)
        losses.append(loss)

    def accuracy(X, y):
        if len(y) == 0:
            return float("nan")
        pred = np.argmax(net.forward(X), axis=1)
        return float(np.mean(pred == y))

    report = TrainingReport(
        holdout_accuracy=accuracy(Xho, yho),
        train_accuracy=accuracy(Xtr, ytr),
        losses=losses,
    )
    return clf, report
