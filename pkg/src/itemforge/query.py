"""Read-side queries: history, lineage, property search, outcome-field
queries, and portable provenance export.

Queries never block writers; they observe each item at a committed
event-id. find_items is backed by the synchronously-maintained property
index and must always equal a brute-force scan (the test suite holds it to
that). export_trace produces a self-contained archive: replaying it in an
empty store reproduces the item byte-for-byte.
"""

from __future__ import annotations

import io
import json
import re
import zipfile
from dataclasses import dataclass
from xml.etree import ElementTree as ET

from .errors import ErrBadQuery, ErrNotFound, ErrRange
from .kernel import Kernel
from .model import ItemRef
from .predefined import parse_payload, step_path

# -- path expressions ------------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_.\-]*"
_STEP_RE = re.compile(rf"({_NAME})(?:\[(\d+)\])?$")


@dataclass
class PathStep:
    name: str
    index: int | None  # 1-based positional predicate


@dataclass
class PathQuery:
    """A slash path over outcome documents: /Root/child[2]/@attr."""

    steps: list[PathStep]
    attribute: str | None

    @classmethod
    def parse(cls, expression: str) -> "PathQuery":
        if not expression.startswith("/"):
            raise ErrBadQuery(f"path must start with '/': {expression!r}")
        parts = expression[1:].split("/")
        if not parts or parts == [""]:
            raise ErrBadQuery("empty path expression")
        attribute = None
        if parts[-1].startswith("@"):
            attribute = parts[-1][1:]
            if not re.fullmatch(_NAME, attribute or ""):
                raise ErrBadQuery(f"bad attribute step '@{attribute}'")
            parts = parts[:-1]
            if not parts:
                raise ErrBadQuery("attribute step needs an element path")
        steps = []
        for part in parts:
            m = _STEP_RE.fullmatch(part)
            if not m:
                raise ErrBadQuery(f"bad path step {part!r}")
            index = int(m.group(2)) if m.group(2) else None
            if index == 0:
                raise ErrBadQuery("positional predicates are 1-based")
            steps.append(PathStep(name=m.group(1), index=index))
        return cls(steps=steps, attribute=attribute)

    def evaluate(self, document: str) -> list[str]:
        """Matched text values; [] for paths that do not exist."""
        try:
            root = ET.fromstring(document)
        except ET.ParseError:
            return []
        first = self.steps[0]
        if root.tag != first.name or (first.index or 1) != 1:
            return []
        nodes = [root]
        for step in self.steps[1:]:
            matched = []
            for node in nodes:
                hits = [c for c in node if c.tag == step.name]
                if step.index is not None:
                    if len(hits) >= step.index:
                        matched.append(hits[step.index - 1])
                else:
                    matched.extend(hits)
            nodes = matched
        if self.attribute is not None:
            return [n.get(self.attribute) for n in nodes
                    if n.get(self.attribute) is not None]
        return [(n.text or "") for n in nodes]


COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")

_DECIMAL_RE = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)")


def compare_values(left: str, comparator: str, right: str) -> bool:
    """Numeric comparison when both sides parse as decimals, else text."""
    if comparator not in COMPARATORS:
        raise ErrBadQuery(f"unknown comparator {comparator!r}")
    ls, rs = left.strip(), right.strip()
    if _DECIMAL_RE.fullmatch(ls) and _DECIMAL_RE.fullmatch(rs):
        lv, rv = float(ls), float(rs)
    else:
        lv, rv = left, right
    if comparator == "=":
        return lv == rv
    if comparator == "!=":
        return lv != rv
    if comparator == "<":
        return lv < rv
    if comparator == "<=":
        return lv <= rv
    if comparator == ">":
        return lv > rv
    return lv >= rv


# -- history and lineage -------------------------------------------------------------

@dataclass
class HistoryPage:
    item: ItemRef
    events: list[dict]
    next_cursor: int | None


@dataclass
class LineageRecord:
    item: ItemRef
    description: ItemRef
    version: int
    instantiated_at: int
    instantiating_agent: str


def history(kernel: Kernel, item: ItemRef, cursor: int | None = None,
            page_size: int = 100) -> HistoryPage:
    if not kernel.store.item_exists(item):
        raise ErrNotFound(f"no such item {item}")
    if page_size < 1 or page_size > 1000:
        raise ErrRange(f"page size {page_size} outside 1..1000")
    start = cursor or 0
    last = kernel.store.last_event_id(item)
    if start > last:
        return HistoryPage(item=item, events=[], next_cursor=None)
    end = min(start + page_size - 1, last)
    events = kernel.store.read_events(item, start, end)
    nxt = end + 1 if end < last else None
    return HistoryPage(item=item, events=[e.summary() for e in events],
                       next_cursor=nxt)


def lineage(kernel: Kernel, item: ItemRef) -> LineageRecord:
    state = kernel.state(item)
    desc = state.property("DescriptionRef").value
    version = state.property("DescriptionVersion").value
    if version == "0":
        raise ErrNotFound(f"item {item} is a bootstrap root with no lineage")
    birth = kernel.store.read_events(item, 0, 0)[0]
    return LineageRecord(item=item, description=desc, version=int(version),
                         instantiated_at=birth.event_id,
                         instantiating_agent=birth.agent)


# -- searches -----------------------------------------------------------------------

def _under(kernel: Kernel, item: ItemRef, prefix: str | None) -> bool:
    if prefix is None:
        return True
    prefix = prefix.rstrip("/")
    for path, target in kernel.store.directory.items():
        if target == item and (path == prefix or path.startswith(prefix + "/")):
            return True
    return False


def find_items(kernel: Kernel, property_name: str, value: str,
               under: str | None = None) -> list[ItemRef]:
    hits = kernel._prop_index.get((property_name, value), set())
    return sorted(i for i in hits if _under(kernel, i, under))


def query_outcomes(kernel: Kernel, schema_name: str, path: str | PathQuery,
                   comparator: str, literal: str,
                   under: str | None = None) -> list[tuple[ItemRef, str]]:
    """Evaluate a field predicate against every item's "last" outcome of a schema."""
    if isinstance(path, str):
        path = PathQuery.parse(path)
    if comparator not in COMPARATORS:
        raise ErrBadQuery(f"unknown comparator {comparator!r}")
    results: list[tuple[ItemRef, str]] = []
    for item in kernel.store.items():
        state = kernel._items.get(item)
        if state is None or not _under(kernel, item, under):
            continue
        vp = state.viewpoints.get((schema_name, "last"))
        if vp is None:
            continue
        document = kernel.store.read_outcome(item, vp.event_id).document
        for value in path.evaluate(document):
            if compare_values(value, comparator, literal):
                results.append((item, value))
    return sorted(results)


# -- provenance export ------------------------------------------------------------------

ARCHIVE_FORMAT = 1


def _closure(kernel: Kernel, item: ItemRef) -> list[ItemRef]:
    """The item plus every description item its replay could ever touch."""
    seen: list[ItemRef] = []
    queue = [item]
    while queue:
        current = queue.pop(0)
        if current in seen or not kernel.store.item_exists(current):
            continue
        seen.append(current)
        state = kernel._items.get(current)
        if state is None:
            continue
        ref = state.properties.get("DescriptionRef")
        if ref is not None and ref.value != current:
            queue.append(ref.value)
        refs = state.collections.get("References")
        if refs is not None:
            queue.extend(s.target for s in refs.slots if s.target)
        # birth payloads may reference the description explicitly
        birth = kernel.store.events(current)[0]
        if birth.activity_path == step_path("CreateItem"):
            payload = parse_payload(
                "CreateItem", kernel.store.read_outcome(current, 0).document)
            if payload.description and payload.description != current:
                queue.append(payload.description)
    return seen


def export_trace(kernel: Kernel, item: ItemRef) -> bytes:
    """Self-contained archive: events, outcomes and the lineage closure."""
    if not kernel.store.item_exists(item):
        raise ErrNotFound(f"no such item {item}")
    items = _closure(kernel, item)
    agents = sorted({e.agent for i in items for e in kernel.store.events(i)})
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
        manifest = {
            "format": ARCHIVE_FORMAT,
            "root": item,
            "items": items,
            "agents": [
                {"agent_id": a.agent_id, "name": a.name, "roles": a.roles}
                for a in (kernel.agents.get(aid) for aid in agents) if a
            ],
        }
        zf.writestr("manifest.json", json.dumps(manifest, indent=2))
        for uuid in items:
            zf.writestr(f"items/{uuid}/events.jsonl", kernel.store.raw_log(uuid))
            for name, data in kernel.store.outcome_files(uuid):
                zf.writestr(f"items/{uuid}/outcomes/{name}", data)
    return buffer.getvalue()


def import_trace(kernel: Kernel, archive: bytes) -> ItemRef:
    """Restore an exported trace into a kernel (records land verbatim)."""
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != ARCHIVE_FORMAT:
            raise ErrBadQuery(f"unsupported archive format {manifest.get('format')}")
        for uuid in manifest["items"]:
            log = zf.read(f"items/{uuid}/events.jsonl")
            outcomes = {}
            prefix = f"items/{uuid}/outcomes/"
            for name in zf.namelist():
                if name.startswith(prefix):
                    outcomes[name[len(prefix):]] = zf.read(name)
            kernel.store.restore_item(uuid, log, outcomes)
    for uuid in manifest["items"]:
        state = kernel._replay_state(uuid, touch_globals=True)
        kernel._items[uuid] = state
        kernel._sync_indexes(uuid)
    return manifest["root"]
