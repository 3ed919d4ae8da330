"""Append-only event log with JSON-lines persistence.

Every orchestration round writes phase-tagged records; serialization is
canonical (sorted keys, no wall-clock fields) so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

PHASES = ("vertical", "brainstorm", "qa", "prompt-opt", "convergence")


@dataclass(frozen=True)
class Event:
    round: int
    phase: str
    role: str | None
    detail: dict

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")
        object.__setattr__(self, "detail", dict(self.detail))

    def to_json(self) -> dict:
        return {"round": self.round, "phase": self.phase, "role": self.role, "detail": self.detail}


@dataclass
class EventLog:
    seed: int
    scenario_hash: str
    events: list[Event] = field(default_factory=list)

    def append(self, round: int, phase: str, role: str | None = None, **detail) -> Event:
        if self.events and round < self.events[-1].round:
            raise ValueError("event rounds must be non-decreasing")
        event = Event(round=round, phase=phase, role=role, detail=detail)
        self.events.append(event)
        return event

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def rounds(self) -> list[int]:
        return sorted({e.round for e in self.events})

    def in_round(self, round: int) -> list[Event]:
        return [e for e in self.events if e.round == round]

    def to_jsonl(self) -> str:
        header = {"schema": "orgengine.events/1", "seed": self.seed, "scenario_hash": self.scenario_hash}
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        lines.extend(
            json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) for e in self.events
        )
        return "\n".join(lines) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EventLog":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"empty event log: {path}")
        header = json.loads(lines[0])
        log = cls(seed=int(header["seed"]), scenario_hash=str(header["scenario_hash"]))
        for line in lines[1:]:
            if not line.strip():
                continue
            record = json.loads(line)
            log.append(record["round"], record["phase"], record.get("role"), **record["detail"])
        return log
