"""Item meta-model: properties, viewpoints, collections, outcomes, item state.

These are the read-side shapes. Nothing here mutates storage; all change
flows through the lifecycle engine, and ItemState is a cached projection
that can always be rebuilt by replaying the item's event log.
"""

from __future__ import annotations

import json
import uuid as _uuid
from dataclasses import dataclass, field

from .errors import ErrConstraint, ErrEmptySlot, ErrNotFound
from .schema import check_lexical

ItemRef = str  # canonical lowercase hex-with-dashes uuid text

PROPERTY_TYPES = ("string", "integer", "decimal", "boolean")


def new_ref() -> ItemRef:
    return str(_uuid.uuid4())


def is_ref(text: str) -> bool:
    try:
        return str(_uuid.UUID(text)) == text
    except (ValueError, AttributeError, TypeError):
        return False


@dataclass
class Property:
    name: str
    value: str
    declared_type: str = "string"
    mutable: bool = True

    def __post_init__(self):
        if self.declared_type not in PROPERTY_TYPES:
            raise ErrConstraint(f"unknown property type '{self.declared_type}'")
        if not check_lexical(self.declared_type, self.value):
            raise ErrConstraint(
                f"property '{self.name}': '{self.value}' is not a valid {self.declared_type}")

    def typed_value(self):
        if self.declared_type == "integer":
            return int(self.value.strip())
        if self.declared_type == "decimal":
            return float(self.value.strip())
        if self.declared_type == "boolean":
            return self.value.strip() in ("true", "1")
        return self.value


@dataclass
class Viewpoint:
    schema_name: str
    view_name: str  # "last" or a version number rendered as text
    event_id: int


@dataclass
class Slot:
    slot_id: int
    target: ItemRef | None = None
    properties: list[Property] = field(default_factory=list)


@dataclass
class Collection:
    name: str
    kind: str  # dependency | aggregation
    slots: list[Slot] = field(default_factory=list)

    def slot(self, slot_id: int) -> Slot:
        for s in self.slots:
            if s.slot_id == slot_id:
                return s
        raise ErrNotFound(f"collection '{self.name}' has no slot {slot_id}")

    def add_member(self, target: ItemRef, properties: list[Property] | None = None) -> Slot:
        """Dependency collections grow by appending a new assigned slot."""
        if self.kind != "dependency":
            raise ErrConstraint(f"collection '{self.name}' is not a dependency collection")
        next_id = max((s.slot_id for s in self.slots), default=-1) + 1
        slot = Slot(slot_id=next_id, target=target, properties=properties or [])
        self.slots.append(slot)
        return slot

    def assign_slot(self, slot_id: int, target: ItemRef) -> Slot:
        """Aggregation collections have fixed numbered slots assigned at most once."""
        if self.kind != "aggregation":
            raise ErrConstraint(f"collection '{self.name}' is not an aggregation")
        slot = self.slot(slot_id)
        if slot.target is not None:
            raise ErrConstraint(f"slot {slot_id} of '{self.name}' is already assigned")
        slot.target = target
        return slot

    def remove_member(self, slot_id: int):
        slot = self.slot(slot_id)
        if self.kind == "dependency":
            self.slots.remove(slot)
        else:
            if slot.target is None:
                raise ErrConstraint(f"slot {slot_id} of '{self.name}' is not assigned")
            slot.target = None


@dataclass
class Outcome:
    """An immutable XML document attached to one event."""

    item: ItemRef
    schema_name: str
    schema_version: int
    event_id: int
    document: str

    @property
    def outcome_id(self) -> tuple[ItemRef, str, int, int]:
        return (self.item, self.schema_name, self.schema_version, self.event_id)


@dataclass
class ItemState:
    """Cached projection of one item; authority lives in the event log."""

    item: ItemRef
    properties: dict[str, Property] = field(default_factory=dict)
    collections: dict[str, Collection] = field(default_factory=dict)
    viewpoints: dict[tuple[str, str], Viewpoint] = field(default_factory=dict)
    workflow: "object | None" = None  # WorkflowInstance; untyped to avoid a cycle
    last_event_id: int = -1

    def property(self, name: str) -> Property:
        prop = self.properties.get(name)
        if prop is None:
            raise ErrNotFound(f"item {self.item} has no property '{name}'")
        return prop

    def viewpoint(self, schema_name: str, view_name: str) -> Viewpoint:
        vp = self.viewpoints.get((schema_name, view_name))
        if vp is None:
            raise ErrNotFound(
                f"item {self.item} has no viewpoint ({schema_name}, {view_name})")
        return vp

    def collection(self, name: str) -> Collection:
        coll = self.collections.get(name)
        if coll is None:
            raise ErrNotFound(f"item {self.item} has no collection '{name}'")
        return coll

    def traverse(self, collection_name: str, slot_id: int) -> ItemRef:
        slot = self.collection(collection_name).slot(slot_id)
        if slot.target is None:
            raise ErrEmptySlot(
                f"slot {slot_id} of '{collection_name}' on {self.item} is unassigned")
        return slot.target

    def canonical_dict(self) -> dict:
        """Deterministic plain-dict form; equal states serialize identically."""
        return {
            "item": self.item,
            "last_event_id": self.last_event_id,
            "properties": [
                {"name": p.name, "value": p.value, "type": p.declared_type,
                 "mutable": p.mutable}
                for p in sorted(self.properties.values(), key=lambda p: p.name)
            ],
            "collections": [
                {"name": c.name, "kind": c.kind,
                 "slots": [
                     {"id": s.slot_id, "target": s.target,
                      "properties": [
                          {"name": p.name, "value": p.value, "type": p.declared_type,
                           "mutable": p.mutable}
                          for p in sorted(s.properties, key=lambda p: p.name)
                      ]}
                     for s in sorted(c.slots, key=lambda s: s.slot_id)
                 ]}
                for c in sorted(self.collections.values(), key=lambda c: c.name)
            ],
            "viewpoints": [
                {"schema": v.schema_name, "view": v.view_name, "event_id": v.event_id}
                for v in sorted(self.viewpoints.values(),
                                key=lambda v: (v.schema_name, v.view_name))
            ],
            "workflow": self.workflow.canonical_dict() if self.workflow else None,
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.canonical_dict(), sort_keys=True,
                          separators=(",", ":")).encode()
