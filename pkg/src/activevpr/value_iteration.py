"""Exhaustive finite-horizon oracle for small deterministic worlds.

In a shift-0 domain the filter outcome is a deterministic function of
(start viewpoint, action sequence), so the optimal policy can be found by
enumerating all n_actions^T sequences. Used as the independent check that
the trained DQN's greedy policy is optimal.
"""

from __future__ import annotations

from itertools import product

from . import bayes
from .actionset import DEFAULT_N_ACTIONS
from .planner import EpisodeEnvironment


def episode_reward(env: EpisodeEnvironment, start: int, actions: tuple[int, ...]) -> int:
    """Terminal reward of the fully specified action sequence."""
    env.reset(episode=0, start=start)
    reward = 0
    for a in actions:
        _, reward, _ = env.step(a)
    return reward


def optimal_first_actions(
    world,
    domain,
    start: int,
    T: int = 1,
    motion_model: bayes.MotionModel | None = None,
    n_actions: int = DEFAULT_N_ACTIONS,
) -> tuple[int, set[int]]:
    """(best terminal reward, first actions of all optimal sequences)."""
    env = EpisodeEnvironment(
        world, domain, T=T, motion_model=motion_model,
        variant="random", n_actions=n_actions, seed=0,
    )
    best_reward = None
    best_first: set[int] = set()
    for seq in product(range(n_actions), repeat=T):
        r = episode_reward(env, start, seq)
        if best_reward is None or r > best_reward:
            best_reward, best_first = r, {seq[0]}
        elif r == best_reward:
            best_first.add(seq[0])
    return best_reward, best_first


def optimal_policy_table(
    world, domain, T: int = 1, motion_model=None, n_actions: int = DEFAULT_N_ACTIONS
) -> dict[int, set[int]]:
    """Optimal first-action sets for every valid start viewpoint."""
    env = EpisodeEnvironment(
        world, domain, T=T, motion_model=motion_model,
        variant="random", n_actions=n_actions, seed=0,
    )
    return {
        start: optimal_first_actions(world, domain, start, T, motion_model, n_actions)[1]
        for start in range(env.max_start + 1)
    }
