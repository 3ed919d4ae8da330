"""Scenario-config ingestion and validation.

One YAML format feeds every subcommand. Sections: roles (with per-role
decision tables), game, brainstorm, kb/revision, bandit, tools, llm, limits,
data, plus optional robustness overrides and the eval blocks used by the
brainstorm/bandit subcommands.

Everything is cross-checked before a run starts: role levels contiguous,
every referenced state/tool/outcome declared, and every role model passes the
contraction check (offending state-action pairs are named). Tool-call actions
default their duration to the tool's configured latency when not set
explicitly.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .bandit import BanditConfig
from .ctmdp import RoleModel, validate_model
from .errors import ConfigError
from .game import GameSpec
from .infotheory import BrainstormConfig, Distribution
from .memory import KnowledgeBase, KnowledgeRule
from .orchestrator import ActionBinding, RevisionRule, RoleSpec, Scenario
from .robustness import RobustnessConfig
from .tools import HttpLlmBackend, MockLlmBackend, build_standard_registry

__all__ = ["ingest_config", "build_scenario", "config_hash", "bundled_scenario_path"]

_SCENARIO_DIR = Path(__file__).parent / "scenarios"


def bundled_scenario_path(name: str) -> Path:
    return _SCENARIO_DIR / f"{name}.yaml"


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def ingest_config(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; all invariants checked up front."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    raw = path.read_bytes()
    try:
        document = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        location = ""
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            location = f" at line {mark.line + 1}, column {mark.column + 1}"
        raise ConfigError(f"cannot parse {path}{location}: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return build_scenario(document, raw)


def _require(section: Mapping, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return section[key]


def _resolve_data_refs(value, data: Mapping, where: str):
    """Replace "$data.NAME" strings with entries of the data section."""
    if isinstance(value, str) and value.startswith("$data."):
        name = value[len("$data.") :]
        if name not in data:
            raise ConfigError(f"{where}: dangling data reference {value!r}")
        return data[name]
    if isinstance(value, dict):
        return {k: _resolve_data_refs(v, data, where) for k, v in value.items()}
    if isinstance(value, list):
        return [_resolve_data_refs(v, data, where) for v in value]
    return value


def _build_role(entry: Mapping, index: int, outcomes: tuple[str, ...], data: Mapping, registry) -> RoleSpec:
    where = f"roles[{index}]"
    label = str(_require(entry, "label", where))
    where = f"roles[{label}]"
    level = int(_require(entry, "level", where))
    spec = _require(entry, "ctmdp", where)

    states = [str(s) for s in _require(spec, "states", f"{where}.ctmdp")]
    if len(set(states)) != len(states):
        raise ConfigError(f"{where}: duplicate state labels")
    actions_block = _require(spec, "actions", f"{where}.ctmdp")
    actions = [str(a) for a in actions_block]
    if len(set(actions)) != len(actions):
        raise ConfigError(f"{where}: duplicate action labels")
    state_idx = {s: i for i, s in enumerate(states)}
    action_idx = {a: i for i, a in enumerate(actions)}

    bindings: dict[int, ActionBinding] = {}
    for name, binding_spec in actions_block.items():
        binding_spec = binding_spec or {}
        kind = str(binding_spec.get("kind", "plain"))
        tool = binding_spec.get("tool")
        inputs = _resolve_data_refs(binding_spec.get("inputs", {}), data, f"{where}.actions.{name}")
        try:
            binding = ActionBinding(kind=kind, tool=tool, tool_inputs=inputs)
        except ValueError as exc:
            raise ConfigError(f"{where}.actions.{name}: {exc}") from exc
        if binding.kind != "plain" or binding.tool is not None:
            bindings[action_idx[name]] = binding

    n_s, n_a = len(states), len(actions)
    rates = np.zeros((n_s, n_a, n_s))
    rewards = np.zeros((n_s, n_a))
    durations = np.ones((n_s, n_a))
    admissible: list[tuple[int, ...]] = []
    table = _require(spec, "table", f"{where}.ctmdp")
    for s in states:
        if s not in table or not table[s]:
            raise ConfigError(f"{where}.ctmdp.table: state {s!r} admits no action")
    for s_name, row in table.items():
        if s_name not in state_idx:
            raise ConfigError(f"{where}.ctmdp.table: unknown state {s_name!r}")
        for a_name, cell in row.items():
            if a_name not in action_idx:
                raise ConfigError(f"{where}.ctmdp.table.{s_name}: unknown action {a_name!r}")
            cell = cell or {}
            s, a = state_idx[s_name], action_idx[a_name]
            rewards[s, a] = float(cell.get("reward", 0.0))
            default_duration = 1.0
            binding = bindings.get(a)
            if binding is not None and binding.kind == "tool":
                base = registry.descriptor(binding.tool).base_latency if binding.tool in registry.names() else 0.0
                default_duration = base if base > 0 else 1.0
            durations[s, a] = float(cell.get("duration", default_duration))
            for target, rate in (cell.get("rates") or {}).items():
                if target not in state_idx:
                    raise ConfigError(
                        f"{where}.ctmdp.table.{s_name}.{a_name}: unknown next state {target!r}"
                    )
                rates[s, a, state_idx[target]] = float(rate)
    for s in states:
        admissible.append(tuple(sorted(action_idx[a] for a in table[s])))

    model = RoleModel(
        states=tuple(states),
        actions=tuple(actions),
        rates=rates,
        rewards=rewards,
        discount=float(spec.get("discount", 1.0)),
        durations=durations,
        reward_form=str(spec.get("reward_form", "discounted")),
        admissible=tuple(admissible),
    )
    report = validate_model(model)
    if not report.ok:
        raise ConfigError(f"{where}: invalid role model: " + "; ".join(report.issues))

    def state_ref(key: str) -> int | None:
        value = entry.get(key)
        if value is None:
            return None
        if value not in state_idx:
            raise ConfigError(f"{where}.{key}: unknown state {value!r}")
        return state_idx[value]

    initial = entry.get("initial_state", states[0])
    if initial not in state_idx:
        raise ConfigError(f"{where}.initial_state: unknown state {initial!r}")

    proposal = None
    if "brainstorm_proposal" in entry:
        weights = entry["brainstorm_proposal"] or {}
        unknown = set(weights) - set(outcomes)
        if unknown:
            raise ConfigError(f"{where}.brainstorm_proposal: unknown outcomes {sorted(unknown)}")
        proposal = Distribution.normalized(
            [float(weights.get(o, 0.0)) for o in outcomes], outcomes
        )

    qa_fields = None
    qa_when = None
    if "qa_proposal" in entry:
        qa_spec = entry["qa_proposal"] or {}
        qa_fields = dict(_require(qa_spec, "fields", f"{where}.qa_proposal"))
        if "when_states" in qa_spec:
            unknown = [s for s in qa_spec["when_states"] if s not in state_idx]
            if unknown:
                raise ConfigError(f"{where}.qa_proposal.when_states: unknown states {unknown}")
            qa_when = frozenset(state_idx[s] for s in qa_spec["when_states"])

    return RoleSpec(
        label=label,
        level=level,
        model=model,
        initial_state=state_idx[initial],
        bindings=bindings,
        delegate_to=entry.get("delegates_to"),
        on_delegation=state_ref("on_delegation"),
        on_report=state_ref("on_report"),
        brainstorm_proposal=proposal,
        qa_fields=qa_fields,
        qa_when_states=qa_when,
        backend=str(entry.get("backend", "mock")),
    )


def _build_game(section: Mapping) -> GameSpec:
    contexts = tuple(str(c) for c in _require(section, "contexts", "game"))
    levels = _require(section, "levels", "game")
    action_labels = tuple(tuple(str(a) for a in level) for level in levels)
    utilities = _require(section, "utilities", "game")
    try:
        return GameSpec(contexts=contexts, action_labels=action_labels, utilities=tuple(utilities))
    except ValueError as exc:
        raise ConfigError(f"game: {exc}") from exc


def _build_kb(section: Mapping | None) -> KnowledgeBase:
    section = section or {}
    declared = section.get("declared_fields")
    rules = []
    for i, spec in enumerate(section.get("rules", []) or []):
        where = f"kb.rules[{i}]"
        try:
            rules.append(
                KnowledgeRule(
                    id=str(_require(spec, "id", where)),
                    scope=str(spec.get("scope", "*")),
                    field=str(_require(spec, "field", where)),
                    op=str(_require(spec, "op", where)),
                    value=spec.get("value"),
                    message=str(spec.get("message", "")),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return KnowledgeBase(
        rules=tuple(rules),
        declared_fields=frozenset(str(f) for f in declared) if declared is not None else None,
    )


def _build_llm_backend(section: Mapping | None):
    if not section:
        return None
    backend = str(section.get("backend", "mock"))
    if backend == "mock":
        script = [(str(e["pattern"]), str(e["response"])) for e in section.get("script", [])]
        return MockLlmBackend(
            script,
            failure_rate=float(section.get("failure_rate", 0.0)),
            seed=int(section.get("seed", 0)),
        )
    if backend == "http":
        import os

        key_env = section.get("api_key_env", "ORGENGINE_LLM_API_KEY")
        return HttpLlmBackend(
            endpoint=str(_require(section, "endpoint", "llm")),
            api_key=os.environ.get(key_env),
            model=str(section.get("model", "default")),
            temperature=float(section.get("temperature", 0.0)),
            timeout=float(section.get("timeout", 30.0)),
            retries=int(section.get("retries", 0)),
        )
    raise ConfigError(f"llm.backend must be 'mock' or 'http', got {backend!r}")


def build_scenario(document: Mapping, raw: bytes = b"") -> Scenario:
    for key in ("roles", "game", "brainstorm", "bandit"):
        if key not in document:
            raise ConfigError(f"missing required section {key!r}")

    data = document.get("data") or {}
    limits = document.get("limits") or {}

    brainstorm_section = document["brainstorm"]
    outcomes = tuple(str(o) for o in _require(brainstorm_section, "outcomes", "brainstorm"))
    try:
        brainstorm = BrainstormConfig(
            alpha=float(brainstorm_section.get("alpha", 2.0)),
            epsilon=float(brainstorm_section.get("epsilon", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"brainstorm: {exc}") from exc

    tools_section = document.get("tools") or {}
    llm_backend = _build_llm_backend(document.get("llm"))
    registry = build_standard_registry(
        documents=tools_section.get("corpus_docs"),
        llm_backend=llm_backend,
        latencies=tools_section.get("latencies"),
    )

    roles = tuple(
        _build_role(entry, i, outcomes, data, registry)
        for i, entry in enumerate(document["roles"])
    )

    game = _build_game(document["game"])
    kb = _build_kb(document.get("kb"))

    revisions = []
    for i, spec in enumerate(document.get("revision", []) or []):
        where = f"revision[{i}]"
        try:
            revisions.append(
                RevisionRule(
                    field=str(_require(spec, "field", where)),
                    action=str(_require(spec, "action", where)),
                    value=spec.get("value"),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    bandit_section = document["bandit"]
    prompts = tuple(str(p) for p in _require(bandit_section, "prompts", "bandit"))
    if not prompts:
        raise ConfigError("bandit.prompts must list at least one variant")
    kernel = bandit_section.get("kernel") or {}
    try:
        bandit_cfg = BanditConfig(
            num_arms=len(prompts),
            context_dim=int(bandit_section.get("context_dim", 2)),
            kernel_name=str(kernel.get("name", "squared-exponential")),
            length_scale=float(kernel.get("length_scale", 1.0)),
            signal_var=float(kernel.get("signal_var", 1.0)),
            obs_noise=float(bandit_section.get("obs_noise", 0.1)),
            jitter=float(bandit_section.get("jitter", 1e-9)),
        )
    except ValueError as exc:
        raise ConfigError(f"bandit: {exc}") from exc

    extras = {
        "robustness": document.get("robustness") or {},
        "brainstorm_eval": document.get("brainstorm_eval"),
        "bandit_synthetic": document.get("bandit_synthetic"),
        "data": data,
    }

    try:
        return Scenario(
            name=str(document.get("name", "scenario")),
            roles=roles,
            game=game,
            context=str(document.get("context", game.contexts[0])),
            kb=kb,
            revisions=tuple(revisions),
            bandit_cfg=bandit_cfg,
            prompts=prompts,
            brainstorm=brainstorm,
            outcomes=outcomes,
            registry=registry,
            max_rounds=int(limits.get("max_rounds", 50)),
            qa_max_iter=int(limits.get("qa_max_iter", 5)),
            stm_capacity=int(limits.get("stm_capacity", 64)),
            scenario_hash=config_hash(raw),
            extras=extras,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def robustness_config_from(scenario: Scenario | None) -> RobustnessConfig:
    overrides = {}
    if scenario is not None:
        overrides = dict(scenario.extras.get("robustness") or {})
    try:
        return RobustnessConfig().with_overrides(overrides) if overrides else RobustnessConfig()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"robustness: {exc}") from exc
