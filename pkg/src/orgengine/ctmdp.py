"""Finite-space continuous-time MDP with per-action durations.

A role model is (S, A, q, r, gamma, omega): transition *rates* q(s,a,s'),
reward rate r(s,a), continuous discount gamma, and action duration
omega(s,a). One backup step computes, per state,

    max_a [ R(s,a) + (1 - exp(-gamma*omega(s,a)))/gamma * sum_s' q(s,a,s') v(s') ]

with the immediate-reward term R(s,a) either integrated against the discount,
R = r/gamma * (1 - exp(-gamma*omega))  (reward_form="discounted", default),
or taken flat, R = r * omega           (reward_form="undiscounted").

q is a rate table, not a stochastic matrix: instead of row normalization the
model enforces the contraction coefficient

    beta = max_{s,a} (1 - exp(-gamma*omega(s,a)))/gamma * sum_s' q(s,a,s')

to be strictly below 1, which makes the backup a sup-norm contraction and the
fixed point computable by value iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError

__all__ = [
    "RoleModel",
    "ValidationReport",
    "ValueFunction",
    "Policy",
    "validate_model",
    "bellman_backup",
    "solve_value_iteration",
    "greedy_policy",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
DEFAULT_TIE_TOL = 1e-9

REWARD_FORMS = ("discounted", "undiscounted")


@dataclass(frozen=True)
class RoleModel:
    """One role's decision model.

    ``admissible`` optionally restricts the action set per state (a tuple of
    allowed action indices per state); ``None`` leaves every action available
    everywhere. Construction coerces arrays but does not validate the
    contraction invariant; use :func:`validate_model` (ingestion paths reject
    failing models).
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    rates: np.ndarray  # (S, A, S), nonnegative
    rewards: np.ndarray  # (S, A)
    discount: float
    durations: np.ndarray  # (S, A), positive
    reward_form: str = "discounted"
    admissible: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        object.__setattr__(self, "durations", np.asarray(self.durations, dtype=float))
        n_s, n_a = len(self.states), len(self.actions)
        if self.rates.shape != (n_s, n_a, n_s):
            raise ValueError(f"rates shape {self.rates.shape}, expected {(n_s, n_a, n_s)}")
        if self.rewards.shape != (n_s, n_a):
            raise ValueError(f"rewards shape {self.rewards.shape}, expected {(n_s, n_a)}")
        if self.durations.shape != (n_s, n_a):
            raise ValueError(f"durations shape {self.durations.shape}, expected {(n_s, n_a)}")
        if self.reward_form not in REWARD_FORMS:
            raise ValueError(f"reward_form must be one of {REWARD_FORMS}")
        if self.admissible is not None:
            adm = tuple(tuple(int(a) for a in row) for row in self.admissible)
            if len(adm) != n_s:
                raise ValueError("admissible must list one action tuple per state")
            for s, row in enumerate(adm):
                if not row:
                    raise ValueError(f"state {self.states[s]!r} admits no action")
                if any(a < 0 or a >= n_a for a in row):
                    raise ValueError(f"admissible action index out of range in state {self.states[s]!r}")
            object.__setattr__(self, "admissible", adm)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def admissible_mask(self) -> np.ndarray:
        """Boolean (S, A) mask of allowed state-action pairs."""
        mask = np.ones((self.num_states, self.num_actions), dtype=bool)
        if self.admissible is not None:
            mask[:] = False
            for s, row in enumerate(self.admissible):
                mask[s, list(row)] = True
        return mask

    def future_coefficients(self) -> np.ndarray:
        """(1 - exp(-gamma*omega))/gamma, the discounted-time weight per (s, a)."""
        return (1.0 - np.exp(-self.discount * self.durations)) / self.discount

    def immediate_rewards(self) -> np.ndarray:
        """R(s, a) under the configured reward form."""
        if self.reward_form == "discounted":
            return self.rewards * self.future_coefficients()
        return self.rewards * self.durations


@dataclass(frozen=True)
class ValidationReport:
    """Contraction check result; ``offending`` lists (state, action, coefficient)
    for every admissible pair whose contraction term reaches 1."""

    ok: bool
    beta: float
    issues: tuple[str, ...] = ()
    offending: tuple[tuple[int, int, float], ...] = ()


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("values must be a vector")
        if self.residual < 0:
            raise ValueError("residual must be nonnegative")

    @classmethod
    def zeros(cls, n: int) -> "ValueFunction":
        return cls(np.zeros(n))

    def to_json(self, states: tuple[str, ...]) -> dict:
        return {
            "values": {s: float(v) for s, v in zip(states, self.values)},
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }


@dataclass(frozen=True)
class Policy:
    """Greedy action per state; ``tie_flags`` marks states where at least two
    admissible actions were within tie tolerance of the maximum."""

    choice: tuple[int, ...]
    tie_flags: frozenset[int] = field(default_factory=frozenset)

    def to_json(self, states: tuple[str, ...], actions: tuple[str, ...]) -> dict:
        return {
            "choice": {states[s]: actions[a] for s, a in enumerate(self.choice)},
            "ties": sorted(states[s] for s in self.tie_flags),
        }


def validate_model(model: RoleModel) -> ValidationReport:
    """Check positivity invariants and the beta < 1 contraction condition."""
    issues: list[str] = []
    if model.discount <= 0 or model.discount > 1:
        issues.append(f"discount {model.discount} outside (0, 1]")
    if np.any(model.durations <= 0):
        issues.append("durations must be strictly positive")
    if np.any(model.rates < 0):
        issues.append("rates must be nonnegative")
    if not (np.isfinite(model.rates).all() and np.isfinite(model.rewards).all()):
        issues.append("non-finite entries in rates or rewards")
    if issues:
        return ValidationReport(ok=False, beta=float("nan"), issues=tuple(issues))

    mask = model.admissible_mask()
    coeff = model.future_coefficients() * model.rates.sum(axis=2)  # (S, A)
    beta = float(coeff[mask].max()) if mask.any() else 0.0
    offending = tuple(
        (int(s), int(a), float(coeff[s, a]))
        for s, a in zip(*np.nonzero(mask & (coeff >= 1.0)))
    )
    if offending:
        issues.append(
            "contraction coefficient >= 1 at: "
            + ", ".join(
                f"({model.states[s]}, {model.actions[a]}) -> {c:.6g}" for s, a, c in offending
            )
        )
    return ValidationReport(ok=not offending, beta=beta, issues=tuple(issues), offending=offending)


def _action_values(model: RoleModel, values: np.ndarray) -> np.ndarray:
    """Backed-up value of every (s, a) pair; inadmissible pairs get -inf."""
    q_values = model.immediate_rewards() + model.future_coefficients() * (model.rates @ values)
    if model.admissible is not None:
        q_values = np.where(model.admissible_mask(), q_values, -np.inf)
    return q_values


def bellman_backup(model: RoleModel, v: ValueFunction) -> ValueFunction:
    """One max-over-actions backup; residual is the sup-norm change."""
    if v.values.shape != (model.num_states,):
        raise ValueError(
            f"value vector has {v.values.shape[0]} entries for {model.num_states} states"
        )
    new_values = _action_values(model, v.values).max(axis=1)
    residual = float(np.max(np.abs(new_values - v.values))) if model.num_states else 0.0
    return ValueFunction(new_values, residual=residual, iterations=v.iterations + 1)


def solve_value_iteration(
    model: RoleModel,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ValueFunction:
    """Iterate backups until the sup-norm residual drops to ``tol``.

    Contraction guarantees convergence within log(tol*(1-beta)/delta0)/log(beta)
    iterations; exceeding ``max_iter`` with a larger residual raises
    :class:`NonConvergenceError` carrying the last iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    report = validate_model(model)
    if not report.ok:
        raise ValueError("invalid model: " + "; ".join(report.issues))
    v = ValueFunction.zeros(model.num_states)
    for _ in range(max_iter):
        v = bellman_backup(model, v)
        if v.residual <= tol:
            return v
    raise NonConvergenceError(
        f"no convergence after {max_iter} iterations (residual {v.residual:.3g} > tol {tol:.3g})",
        last_iterate=v,
    )


def greedy_policy(model: RoleModel, v: ValueFunction, tie_tol: float = DEFAULT_TIE_TOL) -> Policy:
    """Lowest-index maximizing action per state; near-ties are flagged."""
    if tie_tol < 0:
        raise ValueError("tie_tol must be nonnegative")
    q_values = _action_values(model, v.values)
    best = q_values.max(axis=1)
    choice = q_values.argmax(axis=1)  # argmax returns the lowest maximizing index
    within = q_values >= (best[:, None] - tie_tol)
    ties = frozenset(int(s) for s in np.nonzero(within.sum(axis=1) >= 2)[0])
    return Policy(choice=tuple(int(a) for a in choice), tie_flags=ties)
