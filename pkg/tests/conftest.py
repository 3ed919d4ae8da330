"""Shared generators for randomized checks."""

from __future__ import annotations

import numpy as np
import pytest

from orgengine.ctmdp import RoleModel
from orgengine.game import GameSpec


def random_role_model(
    rng: np.random.Generator,
    max_states: int = 4,
    max_actions: int = 3,
    beta_cap: float = 0.9,
    restrict_actions: bool = False,
    reward_form: str = "discounted",
) -> RoleModel:
    """Random model whose contraction coefficient is scaled to ``beta_cap``."""
    n_s = int(rng.integers(1, max_states + 1))
    n_a = int(rng.integers(1, max_actions + 1))
    discount = float(rng.uniform(0.3, 1.0))
    durations = rng.uniform(0.2, 2.0, size=(n_s, n_a))
    rewards = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
    rates = rng.uniform(0.0, 1.0, size=(n_s, n_a, n_s))
    coeff = (1.0 - np.exp(-discount * durations)) / discount
    beta_now = float((coeff * rates.sum(axis=2)).max())
    if beta_now > 0:
        rates *= rng.uniform(0.3, 1.0) * beta_cap / beta_now
    admissible = None
    if restrict_actions and n_a > 1:
        admissible = tuple(
            tuple(sorted(rng.choice(n_a, size=int(rng.integers(1, n_a + 1)), replace=False)))
            for _ in range(n_s)
        )
    return RoleModel(
        states=tuple(f"s{i}" for i in range(n_s)),
        actions=tuple(f"a{i}" for i in range(n_a)),
        rates=rates,
        rewards=rewards,
        discount=discount,
        durations=durations,
        reward_form=reward_form,
        admissible=admissible,
    )


def random_game(
    rng: np.random.Generator,
    max_levels: int = 3,
    max_actions: int = 4,
    max_contexts: int = 3,
) -> GameSpec:
    """Random game with continuous utilities, so payoff ties have measure zero."""
    m = int(rng.integers(1, max_levels + 1))
    counts = [int(rng.integers(1, max_actions + 1)) for _ in range(m)]
    n_ctx = int(rng.integers(1, max_contexts + 1))
    shape = (n_ctx, *counts)
    return GameSpec(
        contexts=tuple(f"c{i}" for i in range(n_ctx)),
        action_labels=tuple(tuple(f"l{l}a{i}" for i in range(counts[l])) for l in range(m)),
        utilities=tuple(rng.uniform(-10.0, 10.0, size=shape) for _ in range(m)),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
