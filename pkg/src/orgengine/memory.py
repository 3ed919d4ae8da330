"""Short/long-term memory stores, knowledge-base rules, and the bounded
correction loop.

The constraint language is a closed comparison/membership grammar (no
arbitrary code), so checks are total, deterministic, and serializable:

    field <= / < / == / >= / > constant
    field in {allowed values}
    field required

Long-term memory is append-only; only ``decision``-kind entries bind future
proposals (a proposal field contradicting a previously recorded decision on
the same field is a violation).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import ConfigError, RevisionError

__all__ = [
    "MemoryEntry",
    "KnowledgeRule",
    "KnowledgeBase",
    "Proposal",
    "Violation",
    "CorrectionTrace",
    "ShortTermMemory",
    "LongTermMemory",
    "check",
    "count_checks",
    "correction_loop",
]

ENTRY_KINDS = ("observation", "thought", "action", "decision")
RULE_OPS = ("<=", "<", "==", ">=", ">", "in", "required")
GLOBAL_SCOPE = "*"

DEFAULT_STM_CAPACITY = 64
DEFAULT_MAX_ITER = 5


@dataclass(frozen=True)
class MemoryEntry:
    round: int
    role: str
    kind: str
    payload: Mapping[str, object]
    timestamp: int  # logical clock, not wall time

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise ValueError(f"kind must be one of {ENTRY_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "payload", dict(self.payload))

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "role": self.role,
            "kind": self.kind,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, record: Mapping) -> "MemoryEntry":
        return cls(
            round=int(record["round"]),
            role=str(record["role"]),
            kind=str(record["kind"]),
            payload=dict(record["payload"]),
            timestamp=int(record["timestamp"]),
        )


@dataclass(frozen=True)
class KnowledgeRule:
    """One declarative constraint over proposal fields."""

    id: str
    scope: str  # role label or "*"
    field: str
    op: str
    value: object = None
    message: str = ""

    def __post_init__(self):
        if self.op not in RULE_OPS:
            raise ValueError(f"op must be one of {RULE_OPS}, got {self.op!r}")
        if self.op == "in" and not isinstance(self.value, (list, tuple, set, frozenset)):
            raise ValueError(f"rule {self.id!r}: op 'in' needs a collection value")

    def applies_to(self, role: str) -> bool:
        return self.scope == GLOBAL_SCOPE or self.scope == role

    def evaluate(self, fields: Mapping[str, object]) -> bool:
        """True when the constraint is satisfied."""
        if self.op == "required":
            return self.field in fields
        if self.field not in fields:
            return True  # absent fields are only caught by 'required'
        observed = fields[self.field]
        if self.op == "in":
            return observed in self.value
        if self.op == "==":
            return observed == self.value
        try:
            if self.op == "<=":
                return observed <= self.value
            if self.op == "<":
                return observed < self.value
            if self.op == ">=":
                return observed >= self.value
            return observed > self.value
        except TypeError as exc:
            raise ConfigError(
                f"rule {self.id!r}: cannot compare {observed!r} with {self.value!r}"
            ) from exc


@dataclass(frozen=True)
class KnowledgeBase:
    """Rule set validated against the scenario's declared field names."""

    rules: tuple[KnowledgeRule, ...] = ()
    declared_fields: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.declared_fields is not None:
            declared = frozenset(self.declared_fields)
            object.__setattr__(self, "declared_fields", declared)
            for rule in self.rules:
                if rule.field not in declared:
                    raise ConfigError(
                        f"rule {rule.id!r} references undeclared field {rule.field!r}"
                    )

    def in_scope(self, role: str) -> tuple[KnowledgeRule, ...]:
        return tuple(r for r in self.rules if r.applies_to(role))


@dataclass(frozen=True)
class Proposal:
    author: str
    fields: Mapping[str, object]
    provenance: tuple[int, ...] = ()

    def __post_init__(self):
        fields = dict(self.fields)
        if not fields:
            raise ValueError("a proposal needs at least one field")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def with_fields(self, **updates) -> "Proposal":
        merged = dict(self.fields)
        merged.update(updates)
        return replace(self, fields=merged)


@dataclass(frozen=True)
class Violation:
    rule_id: str
    field: str
    message: str
    observed: object = None

    def to_json(self) -> dict:
        return {
            "rule": self.rule_id,
            "field": self.field,
            "message": self.message,
            "observed": self.observed,
        }


class ShortTermMemory:
    """Bounded FIFO of recent entries; the oldest is evicted at capacity.

    With ``mirror`` set, every append is also written to long-term memory, so
    eviction never loses the entry.
    """

    def __init__(self, capacity: int = DEFAULT_STM_CAPACITY, mirror: "LongTermMemory | None" = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[MemoryEntry] = deque(maxlen=capacity)
        self._mirror = mirror

    def append(self, entry: MemoryEntry) -> None:
        if self._entries and entry.round < self._entries[-1].round:
            raise ValueError("rounds must be non-decreasing within a store")
        self._entries.append(entry)
        if self._mirror is not None:
            self._mirror.append(entry)

    def window(self, k: int) -> list[MemoryEntry]:
        if k <= 0:
            return []
        return list(self._entries)[-k:]

    def __len__(self) -> int:
        return len(self._entries)


class LongTermMemory:
    """Append-only entry store, queryable by role, kind, and payload field."""

    def __init__(self, entries: Iterable[MemoryEntry] = ()):
        self._entries: list[MemoryEntry] = []
        for entry in entries:
            self.append(entry)

    def append(self, entry: MemoryEntry) -> None:
        if self._entries and entry.round < self._entries[-1].round:
            raise ValueError("rounds must be non-decreasing within a store")
        self._entries.append(entry)

    def query(
        self,
        role: str | None = None,
        kind: str | None = None,
        field: str | None = None,
    ) -> list[MemoryEntry]:
        out = []
        for entry in self._entries:
            if role is not None and entry.role != role:
                continue
            if kind is not None and entry.kind != kind:
                continue
            if field is not None and field not in entry.payload:
                continue
            out.append(entry)
        return out

    def entries(self) -> list[MemoryEntry]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def dump_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self._entries:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "LongTermMemory":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    store.append(MemoryEntry.from_json(json.loads(line)))
        return store


def _decision_bindings(ltm: LongTermMemory | None) -> dict[str, object]:
    """Latest decided value per field across all decision entries."""
    bindings: dict[str, object] = {}
    if ltm is not None:
        for entry in ltm.query(kind="decision"):
            bindings.update(entry.payload)
    return bindings


def check(p: Proposal, kb: KnowledgeBase, ltm: LongTermMemory | None = None) -> list[Violation]:
    """Evaluate every in-scope rule plus long-term-memory consistency.

    An empty list means the proposal is consistent. Rule order does not affect
    the resulting violation set.
    """
    violations: list[Violation] = []
    for rule in kb.in_scope(p.author):
        if kb.declared_fields is not None and rule.field not in kb.declared_fields:
            raise ConfigError(f"rule {rule.id!r} references undeclared field {rule.field!r}")
        if not rule.evaluate(p.fields):
            violations.append(
                Violation(
                    rule_id=rule.id,
                    field=rule.field,
                    message=rule.message or f"{rule.field} violates {rule.op} {rule.value!r}",
                    observed=p.fields.get(rule.field),
                )
            )
    for fname, decided in _decision_bindings(ltm).items():
        if fname in p.fields and p.fields[fname] != decided:
            violations.append(
                Violation(
                    rule_id=f"ltm:{fname}",
                    field=fname,
                    message=f"contradicts recorded decision {fname}={decided!r}",
                    observed=p.fields[fname],
                )
            )
    return violations


def count_checks(p: Proposal, kb: KnowledgeBase, ltm: LongTermMemory | None = None) -> int:
    """Number of individual checks ``check`` evaluates for this proposal."""
    bindings = _decision_bindings(ltm)
    return len(kb.in_scope(p.author)) + sum(1 for f in bindings if f in p.fields)


@dataclass
class CorrectionTrace:
    """One violation list per revision iteration; empty when the proposal was
    already consistent."""

    iterations: list[list[Violation]] = field(default_factory=list)
    escalated: bool = False
    final_violations: list[Violation] = field(default_factory=list)

    @property
    def initial_violations(self) -> list[Violation]:
        return self.iterations[0] if self.iterations else []


def correction_loop(
    p: Proposal,
    revise: Callable[[Proposal, list[Violation]], Proposal],
    kb: KnowledgeBase,
    ltm: LongTermMemory | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[Proposal, CorrectionTrace]:
    """Alternate check and revise until consistent or ``max_iter`` is spent.

    On exhaustion the trace is marked escalated and carries the surviving
    violations; the (still inconsistent) proposal is returned rather than
    silently dropped. A failing revision callback raises
    :class:`RevisionError` carrying the trace so far.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    trace = CorrectionTrace()
    current = p
    for _ in range(max_iter):
        violations = check(current, kb, ltm)
        if not violations:
            return current, trace
        trace.iterations.append(violations)
        try:
            current = revise(current, violations)
        except Exception as exc:
            raise RevisionError(f"revision callback failed: {exc}", trace=trace) from exc
    remaining = check(current, kb, ltm)
    if remaining:
        trace.escalated = True
        trace.final_violations = remaining
    return current, trace
