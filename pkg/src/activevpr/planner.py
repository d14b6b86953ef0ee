"""Episode orchestration for the active place-recognition task.

Wires the world, Bayes filter, reciprocal-rank features, and the action
classifier into the reset/step protocol the DQN trains against, plus the
baseline planners (single-view, random, and the two single-cue ablations).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import bayes, world as world_mod
from .actionset import DEFAULT_N_ACTIONS, action_meters
from .features import fuse, rrf
from .nets import Mlp
from .pdv import rank_of, uniform
from .proxy import ActionClassifier, ilc
from .rl import epsilon_greedy, q_forward

log = logging.getLogger(__name__)

VARIANTS = ("single_view", "random", "olc_only", "ilc_only", "proposed")


def state_dim_for(variant: str, n_actions: int, n_places: int) -> int:
    if variant in ("proposed",):
        return n_actions + n_places
    if variant == "olc_only":
        return n_places
    if variant == "ilc_only":
        return n_actions
    raise ValueError(f"variant {variant!r} has no learned state vector")


class EpisodeStateError(RuntimeError):
    """step() called on a finished episode."""


class ClassifierIlcProvider:
    """ILC provider backed by the trained action classifier."""

    def __init__(self, clf: ActionClassifier):
        self.clf = clf

    def __call__(self, world, v, domain, rng):
        return ilc(self.clf, world_mod.descriptor(world, v, domain, rng))


class IngestedIlcProvider:
    """ILC provider reading externally computed action PDVs.

    `table` maps (viewpoint, domain_id) -> action PDV (see
    world.load_pdv_table). Missing viewpoints fall back to uniform.
    """

    def __init__(self, table: dict, n_actions: int = DEFAULT_N_ACTIONS):
        self.table = table
        self.n_actions = n_actions

    def __call__(self, world, v, domain, rng):
        vec = self.table.get((int(v), domain.id))
        return vec if vec is not None else uniform(self.n_actions)


class EpisodeEnvironment:
    """reset/step environment over one world and one domain.

    Each episode derives an independent RNG stream from
    (env seed, domain seed, episode index), so episode i is reproducible
    regardless of execution order.
    """

    def __init__(
        self,
        world,
        domain,
        T: int = 3,
        motion_model: bayes.MotionModel | None = None,
        ilc_provider=None,
        variant: str = "proposed",
        n_actions: int = DEFAULT_N_ACTIONS,
        seed: int = 0,
        rrf_k: float = 0.0,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; valid: {VARIANTS}")
        if variant in ("proposed", "ilc_only") and ilc_provider is None:
            raise ValueError(f"variant {variant!r} requires an ILC provider")
        self.world = world
        self.domain = domain
        self.T = 0 if variant == "single_view" else T
        self.mm = motion_model or bayes.MotionModel()
        self.ilc_provider = ilc_provider
        self.variant = variant
        self.n_actions = n_actions
        self.seed = seed
        self.rrf_k = rrf_k
        self._step_idx = None
        self.resample_count = 0

    @property
    def state_dim(self) -> int:
        return state_dim_for(
            self.variant if self.variant not in ("random", "single_view") else "proposed",
            self.n_actions,
            self.world.n_places,
        )

    @property
    def max_start(self) -> int:
        """Largest start viewpoint whose worst-case trajectory stays inside."""
        return self.world.n_viewpoints - 1 - self.T * action_meters(self.n_actions - 1)

    # -- episode lifecycle -------------------------------------------------

    def reset(self, episode: int | None = None, start: int | None = None) -> np.ndarray:
        ss = np.random.SeedSequence(
            [self.seed, self.domain.seed, 0 if episode is None else episode]
        )
        self.rng, self.rng_planner = (
            np.random.default_rng(s) for s in ss.spawn(2)
        )
        n = self.world.n_viewpoints
        if start is not None:
            if not 0 <= start < n:
                raise IndexError(f"start {start} out of range")
            self.true_v = int(start)
        else:
            if self.max_start < 0:
                raise ValueError(
                    f"world too short: no start survives T={self.T} x "
                    f"{action_meters(self.n_actions - 1)} m worst-case travel"
                )
            # rejection-sample starts whose worst case would exit the world
            v = int(self.rng.integers(0, n))
            while v > self.max_start:
                self.resample_count += 1
                v = int(self.rng.integers(0, n))
            self.true_v = v
        self.start_v = self.true_v
        self._step_idx = 0
        self.actions: list[int] = []
        self.belief = uniform(n)
        self.belief_trace: list[np.ndarray] = []
        self.obs_trace: list[np.ndarray] = []
        self._observe_and_update()
        return self._state()

    def _observe_and_update(self) -> None:
        obs = world_mod.observe(self.world, self.true_v, self.domain, self.rng)
        self.obs_trace.append(obs)
        self.belief = bayes.perception_update_safe(
            self.belief, bayes.lift_place_likelihood(obs, self.world)
        )
        self.belief_trace.append(self.belief)

    def _state(self) -> np.ndarray:
        olc = bayes.viewpoint_to_place(self.belief, self.world)
        if self.variant == "olc_only":
            return rrf(olc, self.rrf_k)
        ilc_pdv = (
            self.ilc_provider(self.world, self.true_v, self.domain, self.rng)
            if self.ilc_provider is not None
            else uniform(self.n_actions)
        )
        if self.variant == "ilc_only":
            return rrf(ilc_pdv, self.rrf_k)
        return fuse(ilc_pdv, olc, self.rrf_k)

    def step(self, action: int):
        if self._step_idx is None:
            raise EpisodeStateError("reset() the environment before step()")
        if self._step_idx >= self.T:
            raise EpisodeStateError("episode already terminal")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action index {action} out of range")
        meters = action_meters(action)
        self.actions.append(action)
        self.true_v = min(self.true_v + meters, self.world.n_viewpoints - 1)
        self.belief = bayes.motion_update(self.belief, meters, self.mm)
        self._observe_and_update()
        self._step_idx += 1
        state = self._state()
        terminal = self._step_idx >= self.T
        reward = 0
        if terminal:
            reward = 1 if self.predicted_place == self.true_place else -1
        return state, reward, terminal

    # -- outcome views -----------------------------------------------------

    @property
    def place_pdv(self) -> np.ndarray:
        return bayes.viewpoint_to_place(self.belief, self.world)

    @property
    def predicted_place(self) -> int:
        return int(np.argmax(self.place_pdv))

    @property
    def true_place(self) -> int:
        return int(self.world.place_of[self.true_v])

    @property
    def last_rank(self) -> int:
        return rank_of(self.place_pdv, self.true_place)


# -- planners ---------------------------------------------------------------


class Planner:
    variant = "base"

    def next_action(self, state: np.ndarray, rng: np.random.Generator) -> int:
        raise NotImplementedError


class SingleViewPlanner(Planner):
    """No actions; the episode is evaluated at the start viewpoint."""

    variant = "single_view"

    def next_action(self, state, rng):
        raise RuntimeError("single_view episodes take no actions")


class RandomPlanner(Planner):
    variant = "random"

    def __init__(self, n_actions: int = DEFAULT_N_ACTIONS):
        self.n_actions = n_actions

    def next_action(self, state, rng):
        return int(rng.integers(0, self.n_actions))


class DqnPlanner(Planner):
    """Greedy policy over a trained Q-network."""

    def __init__(self, net: Mlp, variant: str = "proposed", eps: float = 0.0):
        self.net = net
        self.variant = variant
        self.eps = eps

    def next_action(self, state, rng):
        return epsilon_greedy(q_forward(self.net, state), self.eps, rng)


@dataclass
class EpisodeResult:
    start: int
    actions: list[int]
    final_place_pdv: np.ndarray
    true_place: int
    rank: int
    final_viewpoint: int
    beliefs: list[np.ndarray] = field(default_factory=list)
    observations: list[np.ndarray] = field(default_factory=list)

    @property
    def reciprocal_rank(self) -> float:
        return 1.0 / self.rank

    def to_json_dict(self, include_trace: bool = False) -> dict:
        out = {
            "start": self.start,
            "actions": self.actions,
            "final_viewpoint": self.final_viewpoint,
            "true_place": self.true_place,
            "rank": self.rank,
            "final_place_pdv": [round(float(x), 12) for x in self.final_place_pdv],
        }
        if include_trace:
            out["beliefs"] = [[float(x) for x in b] for b in self.beliefs]
            out["observations"] = [[float(x) for x in o] for o in self.observations]
        return out


def run_episode(
    env: EpisodeEnvironment,
    planner: Planner,
    episode: int | None = None,
    start: int | None = None,
    keep_trace: bool = True,
) -> EpisodeResult:
    state = env.reset(episode=episode, start=start)
    if planner.variant == "single_view" and env.T != 0:
        raise ValueError("single_view planner requires a T=0 environment")
    for _ in range(env.T):
        action = planner.next_action(state, env.rng_planner)
        state, _, _ = env.step(action)
    return EpisodeResult(
        start=env.start_v,
        actions=list(env.actions),
        final_place_pdv=env.place_pdv,
        true_place=env.true_place,
        rank=env.last_rank,
        final_viewpoint=env.true_v,
        beliefs=list(env.belief_trace) if keep_trace else [],
        observations=list(env.obs_trace) if keep_trace else [],
    )
