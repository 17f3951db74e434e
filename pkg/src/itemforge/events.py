"""The Event record: the sole unit of mutation, serialized as JSON lines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .workflow import RoutingDecision


@dataclass
class Event:
    """One activity state change of one item. Immutable once committed."""

    event_id: int
    timestamp_ms: int  # UTC epoch milliseconds
    agent: str
    activity_path: str
    transition: str
    schema_ref: tuple[str, int] | None = None
    viewpoint_written: str | None = None
    has_outcome: bool = False
    # routing decisions taken while advancing the token; replay feeds these
    # back so scripts never re-run
    decisions: list[RoutingDecision] = field(default_factory=list)
    outcome_sha256: str | None = None
    # WriteViewpoint events that point at a prior event rather than their own
    viewpoint_target: int | None = None

    def to_json(self) -> str:
        record = {
            "id": self.event_id,
            "ts": self.timestamp_ms,
            "agent": self.agent,
            "path": self.activity_path,
            "transition": self.transition,
            "schema": list(self.schema_ref) if self.schema_ref else None,
            "view": self.viewpoint_written,
            "outcome": self.has_outcome,
        }
        if self.decisions:
            record["decisions"] = [
                {"path": d.path, "kind": d.kind, "choice": d.choice}
                for d in self.decisions
            ]
        if self.outcome_sha256:
            record["sha256"] = self.outcome_sha256
        if self.viewpoint_target is not None:
            record["vp_target"] = self.viewpoint_target
        return json.dumps(record, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Event":
        record = json.loads(line)
        return cls(
            event_id=record["id"],
            timestamp_ms=record["ts"],
            agent=record["agent"],
            activity_path=record["path"],
            transition=record["transition"],
            schema_ref=tuple(record["schema"]) if record.get("schema") else None,
            viewpoint_written=record.get("view"),
            has_outcome=record.get("outcome", False),
            decisions=[
                RoutingDecision(path=d["path"], kind=d["kind"], choice=d["choice"])
                for d in record.get("decisions", [])
            ],
            outcome_sha256=record.get("sha256"),
            viewpoint_target=record.get("vp_target"),
        )

    def summary(self) -> dict:
        return {
            "id": self.event_id,
            "timestamp_ms": self.timestamp_ms,
            "agent": self.agent,
            "activity_path": self.activity_path,
            "transition": self.transition,
            "schema": list(self.schema_ref) if self.schema_ref else None,
            "viewpoint_written": self.viewpoint_written,
            "has_outcome": self.has_outcome,
        }
