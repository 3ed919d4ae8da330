"""Multi-level hierarchical game solving by backward induction.

Level 1 is the leader; each level picks the action maximizing its own utility
given the best responses of every level below it, per exogenous context. All
utilities are extensional tables so a brute-force enumeration can consume the
same data as the solver.

Finite action sets cannot guarantee a unique equilibrium path, so exact payoff
ties are broken toward the lowest action index and surfaced in the solution's
tie report instead of being assumed away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GameSpec",
    "SolutionPath",
    "DeviationReport",
    "Deviation",
    "solve_spe",
    "best_response",
    "verify_spe",
]

DEVIATION_TOL = 1e-12


@dataclass(frozen=True)
class GameSpec:
    """Levels 1..m with per-level action labels and utility tables.

    ``utilities[l]`` has shape (n_contexts, |A_1|, ..., |A_m|): every level's
    payoff may depend on the context and on all levels' actions.
    """

    contexts: tuple[str, ...]
    action_labels: tuple[tuple[str, ...], ...]
    utilities: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "contexts", tuple(self.contexts))
        object.__setattr__(
            self, "action_labels", tuple(tuple(level) for level in self.action_labels)
        )
        object.__setattr__(
            self, "utilities", tuple(np.asarray(u, dtype=float) for u in self.utilities)
        )
        m = len(self.action_labels)
        if m < 1:
            raise ValueError("a game needs at least one level")
        if not self.contexts:
            raise ValueError("a game needs at least one context")
        if len(self.utilities) != m:
            raise ValueError(f"{len(self.utilities)} utility tables for {m} levels")
        expected = (len(self.contexts),) + tuple(len(a) for a in self.action_labels)
        for l, table in enumerate(self.utilities):
            if table.shape != expected:
                raise ValueError(
                    f"utility table for level {l + 1} has shape {table.shape}, expected {expected}"
                )
            if not np.isfinite(table).all():
                raise ValueError(f"utility table for level {l + 1} has non-finite entries")

    @property
    def num_levels(self) -> int:
        return len(self.action_labels)


@dataclass(frozen=True)
class SolutionPath:
    """Equilibrium action per (context, level), plus realized utilities.

    ``tie_report`` holds (context index, level) pairs where the chosen action
    tied with another on the equilibrium path.
    """

    decisions: tuple[tuple[int, ...], ...]  # per context, per level
    tie_report: frozenset[tuple[int, int]]
    utilities_at_path: tuple[tuple[float, ...], ...]  # per context, per level

    def decision_labels(self, game: GameSpec) -> dict[str, dict[int, str]]:
        return {
            game.contexts[ci]: {
                l + 1: game.action_labels[l][a] for l, a in enumerate(profile)
            }
            for ci, profile in enumerate(self.decisions)
        }

    def to_json(self, game: GameSpec) -> dict:
        return {
            "decisions": {
                game.contexts[ci]: {
                    str(l + 1): game.action_labels[l][a] for l, a in enumerate(profile)
                }
                for ci, profile in enumerate(self.decisions)
            },
            "utilities": {
                game.contexts[ci]: {str(l + 1): u for l, u in enumerate(us)}
                for ci, us in enumerate(self.utilities_at_path)
            },
            "ties": sorted([game.contexts[ci], level] for ci, level in self.tie_report),
        }


@dataclass(frozen=True)
class Deviation:
    context: int
    level: int  # 1-based
    alternative: int
    payoff_at_path: float
    payoff_at_deviation: float


@dataclass(frozen=True)
class DeviationReport:
    violations: tuple[Deviation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _continuation(
    game: GameSpec, ci: int, prefix: tuple[int, ...]
) -> tuple[tuple[int, ...], set[tuple[int, int]]]:
    """Equilibrium play of all levels below ``prefix``, with on-path ties."""
    level = len(prefix)  # 0-based index of the level about to move
    if level == game.num_levels:
        return (), set()
    best_action = -1
    best_value = -np.inf
    best_comp: tuple[int, ...] = ()
    best_ties: set[tuple[int, int]] = set()
    tied_here = False
    for a in range(len(game.action_labels[level])):
        comp, sub_ties = _continuation(game, ci, prefix + (a,))
        value = float(game.utilities[level][(ci,) + prefix + (a,) + comp])
        if value > best_value:
            best_action, best_value, best_comp, best_ties = a, value, comp, sub_ties
            tied_here = False
        elif value == best_value:
            tied_here = True
    ties = set(best_ties)
    if tied_here:
        ties.add((ci, level + 1))
    return (best_action,) + best_comp, ties


def solve_spe(game: GameSpec) -> SolutionPath:
    """Backward-induction equilibrium path for every context."""
    decisions: list[tuple[int, ...]] = []
    ties: set[tuple[int, int]] = set()
    realized: list[tuple[float, ...]] = []
    for ci in range(len(game.contexts)):
        profile, context_ties = _continuation(game, ci, ())
        ties |= context_ties
        decisions.append(profile)
        realized.append(
            tuple(float(game.utilities[l][(ci,) + profile]) for l in range(game.num_levels))
        )
    return SolutionPath(
        decisions=tuple(decisions),
        tie_report=frozenset(ties),
        utilities_at_path=tuple(realized),
    )


def best_response(
    game: GameSpec, level: int, context: int, upstream: tuple[int, ...]
) -> tuple[int, float]:
    """Equilibrium action and payoff of ``level`` (1-based) given fixed
    upstream actions, with all lower levels playing their best responses."""
    if len(upstream) != level - 1:
        raise ValueError(f"upstream profile has {len(upstream)} actions for level {level}")
    tail, _ = _continuation(game, context, tuple(upstream))
    action = tail[0]
    full = tuple(upstream) + tail
    return action, float(game.utilities[level - 1][(context,) + full])


def verify_spe(game: GameSpec, path: SolutionPath) -> DeviationReport:
    """Check the no-profitable-deviation property at every (context, level).

    For each unilateral deviation, downstream levels re-optimize; the report
    lists every deviation whose payoff exceeds the path payoff beyond
    tolerance. An empty report certifies the path as subgame perfect.
    """
    if len(path.decisions) != len(game.contexts):
        raise ValueError("path does not cover every context")
    violations: list[Deviation] = []
    for ci, profile in enumerate(path.decisions):
        if len(profile) != game.num_levels:
            raise ValueError(f"path for context {game.contexts[ci]!r} misses levels")
        for l in range(game.num_levels):
            u_path = float(game.utilities[l][(ci,) + tuple(profile)])
            for alt in range(len(game.action_labels[l])):
                if alt == profile[l]:
                    continue
                comp, _ = _continuation(game, ci, tuple(profile[:l]) + (alt,))
                dev_profile = tuple(profile[:l]) + (alt,) + comp
                u_dev = float(game.utilities[l][(ci,) + dev_profile])
                if u_dev > u_path + DEVIATION_TOL:
                    violations.append(
                        Deviation(
                            context=ci,
                            level=l + 1,
                            alternative=alt,
                            payoff_at_path=u_path,
                            payoff_at_deviation=u_dev,
                        )
                    )
    return DeviationReport(violations=tuple(violations))
