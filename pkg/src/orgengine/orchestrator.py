"""Round loop coordinating role models, the hierarchy game, brainstorming,
QA, and prompt optimization.

Each round runs four phases in a fixed order:

1. vertical: the hierarchy game is solved for the current context and, level
   by level from the top, every role takes the greedy action of its own
   decision model (delegations, tool calls, and reports happen here);
2. brainstorm: same-level proposal distributions are merged into a posterior,
   but only when its divergence from the running prior clears the configured
   gate, otherwise proposals pass through unmerged;
3. qa: the round's field proposals run through the bounded correction loop
   against the knowledge base and long-term memory;
4. prompt-opt: one Thompson-sampling round over the prompt variants, rewarded
   by the QA pass fraction.

The episode converges when the joint action profile repeats on two
consecutive rounds. With mock backends the whole run is a pure function of
(scenario, seed): event logs are byte-identical across reruns.

State jumps on receiving a delegation or a report are orchestration
mechanics, not part of a role's own rate dynamics: a role's post-action state
is the highest-rate successor of its chosen action (self if none), and an
incoming delegation/report overrides it with the configured landing state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bandit import ArmPosterior, BanditConfig, select_arm, update
from .ctmdp import Policy, RoleModel, ValueFunction, greedy_policy, solve_value_iteration, validate_model
from .errors import ConfigError
from .events import EventLog
from .game import GameSpec, SolutionPath, solve_spe
from .infotheory import BrainstormConfig, Distribution, renyi_divergence
from .memory import (
    KnowledgeBase,
    LongTermMemory,
    MemoryEntry,
    Proposal,
    ShortTermMemory,
    correction_loop,
    count_checks,
)
from .tools import ToolRegistry

__all__ = [
    "ActionBinding",
    "RoleSpec",
    "RevisionRule",
    "Scenario",
    "Plan",
    "DelegationNode",
    "DelegationTree",
    "run_episode",
    "report_chain",
]

ACTION_KINDS = ("plain", "delegate", "report", "tool")


@dataclass(frozen=True)
class ActionBinding:
    """What an action does beyond its model dynamics."""

    kind: str = "plain"
    tool: str | None = None
    tool_inputs: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"action kind must be one of {ACTION_KINDS}")
        if self.kind == "tool" and not self.tool:
            raise ValueError("tool actions need a tool name")
        object.__setattr__(self, "tool_inputs", dict(self.tool_inputs))


@dataclass(frozen=True)
class RoleSpec:
    label: str
    level: int
    model: RoleModel
    initial_state: int
    bindings: Mapping[int, ActionBinding] = field(default_factory=dict)
    delegate_to: str | None = None
    on_delegation: int | None = None  # landing state when delegated to
    on_report: int | None = None  # landing state when a delegate reports back
    brainstorm_proposal: Distribution | None = None
    qa_fields: Mapping[str, object] | None = None
    qa_when_states: frozenset[int] | None = None  # None = any state
    backend: str = "mock"

    def __post_init__(self):
        object.__setattr__(self, "bindings", dict(self.bindings))
        if self.qa_fields is not None:
            object.__setattr__(self, "qa_fields", dict(self.qa_fields))

    def binding(self, action: int) -> ActionBinding:
        return self.bindings.get(action, ActionBinding())


@dataclass(frozen=True)
class RevisionRule:
    """Config-declared revision applied to a violating proposal field."""

    field: str
    action: str  # "halve" or "set"
    value: object = None

    def __post_init__(self):
        if self.action not in ("halve", "set"):
            raise ValueError(f"unknown revision action {self.action!r}")

    def apply(self, current):
        if self.action == "set":
            return self.value
        if isinstance(current, (int, float)) and not isinstance(current, bool):
            return current / 2
        return current


@dataclass(frozen=True)
class Scenario:
    name: str
    roles: tuple[RoleSpec, ...]
    game: GameSpec
    context: str
    kb: KnowledgeBase
    revisions: tuple[RevisionRule, ...]
    bandit_cfg: BanditConfig
    prompts: tuple[str, ...]
    brainstorm: BrainstormConfig
    outcomes: tuple[str, ...]
    registry: ToolRegistry
    max_rounds: int = 50
    qa_max_iter: int = 5
    stm_capacity: int = 64
    scenario_hash: str = ""
    extras: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "prompts", tuple(self.prompts))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "revisions", tuple(self.revisions))
        object.__setattr__(self, "extras", dict(self.extras))
        labels = [r.label for r in self.roles]
        if len(set(labels)) != len(labels):
            raise ConfigError("role labels must be unique")
        levels = sorted({r.level for r in self.roles})
        if levels != list(range(1, len(levels) + 1)):
            raise ConfigError(f"role levels must form a contiguous 1..m, got {levels}")
        if len(levels) != self.game.num_levels:
            raise ConfigError(
                f"game has {self.game.num_levels} levels but roles occupy {len(levels)}"
            )
        if self.context not in self.game.contexts:
            raise ConfigError(f"context {self.context!r} is not a game context")
        if len(self.prompts) != self.bandit_cfg.num_arms:
            raise ConfigError("one prompt variant per bandit arm")
        for role in self.roles:
            if role.delegate_to is not None and role.delegate_to not in labels:
                raise ConfigError(
                    f"role {role.label!r} delegates to unknown role {role.delegate_to!r}"
                )
            for action, binding in role.bindings.items():
                if binding.kind == "tool" and binding.tool not in self.registry.names():
                    raise ConfigError(
                        f"role {role.label!r} action {role.model.actions[action]!r} "
                        f"references unregistered tool {binding.tool!r}"
                    )

    def role(self, label: str) -> RoleSpec:
        for r in self.roles:
            if r.label == label:
                return r
        raise KeyError(label)

    def roles_at(self, level: int) -> list[RoleSpec]:
        return [r for r in self.roles if r.level == level]

    @property
    def num_levels(self) -> int:
        return self.game.num_levels


@dataclass
class Plan:
    """Final per-role record plus the last vertical pass's equilibrium."""

    converged: bool
    rounds: int
    final_actions: dict[str, str]
    final_states: dict[str, str]
    spe: dict
    escalations: list[dict]

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "rounds": self.rounds,
            "final_actions": self.final_actions,
            "final_states": self.final_states,
            "spe": self.spe,
            "escalations": self.escalations,
        }


class _EpisodeState:
    def __init__(self, sc: Scenario, seed: int):
        self.sc = sc
        self.rng = np.random.default_rng(seed)
        self.role_state: dict[str, int] = {r.label: r.initial_state for r in sc.roles}
        self.values: dict[str, ValueFunction] = {}
        self.policies: dict[str, Policy] = {}
        for r in sc.roles:
            v = solve_value_iteration(r.model)
            self.values[r.label] = v
            self.policies[r.label] = greedy_policy(r.model, v)
        self.level_priors: dict[int, Distribution] = {}
        self.ltm = LongTermMemory()
        self.stm = ShortTermMemory(capacity=sc.stm_capacity, mirror=self.ltm)
        self.arms = [ArmPosterior.empty(sc.bandit_cfg) for _ in sc.prompts]
        self.last_reward = 1.0
        self.last_profile: tuple[str, ...] | None = None
        self.delegator_of: dict[str, str] = {}
        self.open_delegations: set[tuple[str, str]] = set()
        self.escalations: list[dict] = []
        self.last_actions: dict[str, str] = {}
        self.path: SolutionPath | None = None


def _own_transition(model: RoleModel, state: int, action: int) -> int:
    rates = model.rates[state, action]
    if rates.max() <= 0.0:
        return state
    return int(np.argmax(rates))


def _jsonable(value):
    if isinstance(value, float) and not np.isfinite(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _vertical_phase(state: _EpisodeState, log: EventLog, round_no: int) -> None:
    sc = state.sc
    state.path = solve_spe(sc.game)
    ci = sc.game.contexts.index(sc.context)
    decisions = state.path.decisions[ci]
    for level in range(1, sc.num_levels + 1):
        decision_label = sc.game.action_labels[level - 1][decisions[level - 1]]
        for role in sc.roles_at(level):
            s = state.role_state[role.label]
            a = state.policies[role.label].choice[s]
            state.last_actions[role.label] = role.model.actions[a]
            log.append(
                round_no,
                "vertical",
                role.label,
                event="act",
                level=level,
                state=role.model.states[s],
                action=role.model.actions[a],
                spe_decision=decision_label,
            )
            state.stm.append(
                MemoryEntry(
                    round=round_no,
                    role=role.label,
                    kind="action",
                    payload={"state": role.model.states[s], "action": role.model.actions[a]},
                    timestamp=round_no,
                )
            )
            binding = role.binding(a)
            if binding.kind == "delegate" and role.delegate_to is not None:
                target = sc.role(role.delegate_to)
                log.append(
                    round_no, "vertical", role.label, event="delegation", to=target.label
                )
                state.delegator_of[target.label] = role.label
                state.open_delegations.add((role.label, target.label))
                if target.on_delegation is not None:
                    state.role_state[target.label] = target.on_delegation
            elif binding.kind == "tool":
                def sink(name, result, _role=role.label, _round=round_no):
                    log.append(
                        _round,
                        "vertical",
                        _role,
                        event="tool",
                        tool=name,
                        status=result.status,
                        latency=_jsonable(result.latency),
                        error=result.error,
                    )

                result = sc.registry.invoke(binding.tool, binding.tool_inputs, state.rng, sink=sink)
                payload = {"tool": binding.tool, "status": result.status}
                if result.status == "ok" and "inertia" in (result.output or {}):
                    payload["inertia"] = result.output["inertia"]
                state.stm.append(
                    MemoryEntry(
                        round=round_no,
                        role=role.label,
                        kind="observation",
                        payload=payload,
                        timestamp=round_no,
                    )
                )
            elif binding.kind == "report":
                target_label = state.delegator_of.get(role.label)
                log.append(
                    round_no, "vertical", role.label, event="report", to=target_label
                )
                if target_label is not None:
                    state.open_delegations.discard((target_label, role.label))
                    target = sc.role(target_label)
                    if target.on_report is not None:
                        state.role_state[target_label] = target.on_report
            # Own dynamics last; jumps applied above target other roles only.
            state.role_state[role.label] = _own_transition(role.model, s, a)


def _brainstorm_phase(state: _EpisodeState, log: EventLog, round_no: int) -> None:
    sc = state.sc
    by_level: dict[int, list[Distribution]] = {}
    for role in sc.roles:
        if role.brainstorm_proposal is not None:
            by_level.setdefault(role.level, []).append(role.brainstorm_proposal)
    if not by_level:
        log.append(round_no, "brainstorm", None, event="no-proposals")
        return
    for level in sorted(by_level):
        proposals = by_level[level]
        posterior = Distribution.normalized(
            np.mean([d.probs for d in proposals], axis=0), sc.outcomes
        )
        prior = state.level_priors.get(level) or Distribution.uniform(sc.outcomes)
        divergence = renyi_divergence(posterior, prior, sc.brainstorm.alpha)
        if divergence >= sc.brainstorm.epsilon:
            state.level_priors[level] = posterior
            log.append(
                round_no,
                "brainstorm",
                None,
                event="merge",
                level=level,
                divergence_bits=_jsonable(divergence),
                merged={o: float(p) for o, p in zip(sc.outcomes, posterior.probs)},
            )
        else:
            log.append(
                round_no,
                "brainstorm",
                None,
                event="gate-skipped",
                level=level,
                divergence_bits=_jsonable(divergence),
            )


def _make_reviser(sc: Scenario):
    by_field = {rule.field: rule for rule in sc.revisions}

    def revise(p: Proposal, violations) -> Proposal:
        updates = {}
        for v in violations:
            rule = by_field.get(v.field)
            if rule is not None:
                updates[v.field] = rule.apply(p.fields.get(v.field))
        return p.with_fields(**updates) if updates else p

    return revise


def _qa_phase(state: _EpisodeState, log: EventLog, round_no: int) -> float:
    sc = state.sc
    revise = _make_reviser(sc)
    total_checks = 0
    failed_checks = 0
    emitted = False
    for role in sc.roles:
        if role.qa_fields is None:
            continue
        if role.qa_when_states is not None and state.role_state[role.label] not in role.qa_when_states:
            continue
        proposal = Proposal(author=role.label, fields=role.qa_fields)
        checks = count_checks(proposal, sc.kb, state.ltm)
        resolved, trace = correction_loop(
            proposal, revise, sc.kb, state.ltm, max_iter=sc.qa_max_iter
        )
        initial = trace.initial_violations
        total_checks += checks
        failed_checks += len(initial)
        log.append(
            round_no,
            "qa",
            role.label,
            event="check",
            iterations=len(trace.iterations),
            escalated=trace.escalated,
            violations=[v.to_json() for v in initial],
        )
        emitted = True
        if trace.escalated:
            state.escalations.append(
                {
                    "round": round_no,
                    "role": role.label,
                    "violations": [v.to_json() for v in trace.final_violations],
                }
            )
        else:
            state.ltm.append(
                MemoryEntry(
                    round=round_no,
                    role=role.label,
                    kind="decision",
                    payload=dict(resolved.fields),
                    timestamp=round_no,
                )
            )
    if not emitted:
        log.append(round_no, "qa", None, event="no-proposals")
    if total_checks == 0:
        return 1.0
    return max(0.0, (total_checks - failed_checks) / total_checks)


def _prompt_opt_phase(state: _EpisodeState, log: EventLog, round_no: int, reward: float) -> None:
    sc = state.sc
    x = np.zeros(sc.bandit_cfg.context_dim)
    x[0] = round_no / sc.max_rounds
    if sc.bandit_cfg.context_dim > 1:
        x[1] = state.last_reward
    arm = select_arm(state.arms, x, state.rng)
    state.arms[arm] = update(state.arms[arm], x, reward)
    log.append(
        round_no,
        "prompt-opt",
        None,
        event="select",
        arm=arm,
        prompt=sc.prompts[arm],
        reward=_jsonable(reward),
    )
    state.last_reward = reward


def step_round(state: _EpisodeState, log: EventLog, round_no: int) -> bool:
    """Run the four phases plus the convergence check; True when converged."""
    _vertical_phase(state, log, round_no)
    _brainstorm_phase(state, log, round_no)
    reward = _qa_phase(state, log, round_no)
    _prompt_opt_phase(state, log, round_no, reward)
    profile = tuple(state.last_actions[r.label] for r in state.sc.roles)
    converged = profile == state.last_profile
    log.append(
        round_no,
        "convergence",
        None,
        event="converged" if converged else "continue",
        profile=list(profile),
    )
    state.last_profile = profile
    return converged


def run_episode(sc: Scenario, seed: int) -> tuple[Plan, EventLog]:
    """Run rounds until the action profile repeats or max_rounds is hit."""
    for role in sc.roles:
        report = validate_model(role.model)
        if not report.ok:
            raise ConfigError(f"role {role.label!r}: " + "; ".join(report.issues))
    state = _EpisodeState(sc, seed)
    log = EventLog(seed=seed, scenario_hash=sc.scenario_hash)
    converged = False
    rounds = 0
    for round_no in range(1, sc.max_rounds + 1):
        rounds = round_no
        if step_round(state, log, round_no):
            converged = True
            break
    plan = Plan(
        converged=converged,
        rounds=rounds,
        final_actions=dict(state.last_actions),
        final_states={
            r.label: r.model.states[state.role_state[r.label]] for r in sc.roles
        },
        spe=state.path.to_json(sc.game) if state.path is not None else {},
        escalations=state.escalations,
    )
    return plan, log


# ---------------------------------------------------------------------------
# delegation tree reconstruction

@dataclass
class DelegationNode:
    role: str
    delegated_round: int | None = None
    reported_round: int | None = None
    children: list["DelegationNode"] = field(default_factory=list)

    @property
    def closed(self) -> bool:
        return self.delegated_round is None or self.reported_round is not None

    def to_json(self) -> dict:
        return {
            "role": self.role,
            "delegated_round": self.delegated_round,
            "reported_round": self.reported_round,
            "open": not self.closed,
            "children": [c.to_json() for c in self.children],
        }


@dataclass
class DelegationTree:
    roots: list[DelegationNode]

    def all_closed(self) -> bool:
        def walk(node: DelegationNode) -> bool:
            return node.closed and all(walk(c) for c in node.children)

        return all(walk(r) for r in self.roots)

    def structure(self) -> dict:
        def walk(node: DelegationNode) -> dict:
            return {c.role: walk(c) for c in node.children}

        return {r.role: walk(r) for r in self.roots}

    def to_json(self) -> dict:
        return {"roots": [r.to_json() for r in self.roots], "all_closed": self.all_closed()}

    def to_text(self) -> str:
        lines: list[str] = []

        def walk(node: DelegationNode, depth: int) -> None:
            suffix = ""
            if node.delegated_round is not None:
                closing = (
                    f"reported r{node.reported_round}"
                    if node.reported_round is not None
                    else "OPEN"
                )
                suffix = f" (delegated r{node.delegated_round}, {closing})"
            lines.append("  " * depth + node.role + suffix)
            for child in node.children:
                walk(child, depth + 1)

        for root in self.roots:
            walk(root, 0)
        return "\n".join(lines) + "\n"


def report_chain(log: EventLog) -> DelegationTree:
    """Rebuild the delegation/report tree from an episode's events.

    Every delegation edge carries the round it opened; edges without a
    matching upward report keep an explicit open marker.
    """
    nodes: dict[str, DelegationNode] = {}
    delegated_to: set[str] = set()
    seen_roles: list[str] = []

    def node(role: str) -> DelegationNode:
        if role not in nodes:
            nodes[role] = DelegationNode(role=role)
        return nodes[role]

    for event in log:
        if event.role is not None and event.role not in seen_roles:
            seen_roles.append(event.role)
        if event.phase != "vertical":
            continue
        kind = event.detail.get("event")
        if kind == "delegation":
            source, target = event.role, event.detail["to"]
            child = node(target)
            if target not in delegated_to:  # first delegation wins the tree edge
                node(source).children.append(child)
                delegated_to.add(target)
                child.delegated_round = event.round
        elif kind == "report":
            target = event.detail.get("to")
            if target is not None:
                child = node(event.role)
                if child.reported_round is None:
                    child.reported_round = event.round
    roots = [nodes[r] for r in nodes if r not in delegated_to]
    if not roots and seen_roles:
        roots = [node(seen_roles[0])]  # degenerate run: single-node tree
    return DelegationTree(roots=roots)


def plan_to_json_str(plan: Plan) -> str:
    return json.dumps(plan.to_json(), indent=2, sort_keys=True) + "\n"
