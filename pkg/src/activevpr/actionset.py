"""The discrete forward-motion action set: index i moves i+1 meters."""

DEFAULT_N_ACTIONS = 30


def action_meters(index: int) -> int:
    if index < 0:
        raise ValueError("action index must be >= 0")
    return index + 1


def max_travel(n_actions: int = DEFAULT_N_ACTIONS) -> int:
    return n_actions
