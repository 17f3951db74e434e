"""Durable append-only event store.

On-disk authority is minimal: a manifest, one JSONL event log per item, and
raw XML outcome files addressable by outcome-id. Everything else (item
state, the directory, indexes) is a projection rebuilt from the logs on
open, which makes crash recovery a matter of truncating a torn log tail at
the last commit marker.

A transaction (all events of one execute on one item) is written as one
byte blob whose final line carries a commit marker; fsync before
acknowledging. Recovery keeps the longest prefix of complete, committed
lines and discards the rest.
"""

from __future__ import annotations

import json
import os
import threading
from datetime import datetime, timezone
from pathlib import Path

from .errors import ErrConfig, ErrNotFound, ErrRange, ErrStorage
from .events import Event
from .model import Outcome

FORMAT_VERSION = 1


def _fsync_dir(path: Path):
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class Store:
    """Append-only persistence: event logs, outcomes, manifest, directory."""

    def __init__(self, root: Path, fsync_mode: str = "commit"):
        self.root = Path(root)
        self.fsync_mode = fsync_mode
        self.manifest: dict = {}
        self._events: dict[str, list[Event]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        # directory is a projection owned by the kernel; lives here because
        # resolve_path/list_children are storage-level reads
        self.directory: dict[str, str] = {}

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(cls, root: str | Path, fsync_mode: str = "commit") -> "Store":
        root = Path(root)
        if root.exists() and any(root.iterdir()):
            raise ErrConfig(f"store path {root} exists and is not empty")
        (root / "items").mkdir(parents=True, exist_ok=True)
        store = cls(root, fsync_mode)
        store.manifest = {
            "format": FORMAT_VERSION,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
            "roots": {},
        }
        store._write_manifest()
        return store

    @classmethod
    def open(cls, root: str | Path, fsync_mode: str = "commit") -> "Store":
        root = Path(root)
        manifest_path = root / "manifest.json"
        if not manifest_path.is_file():
            raise ErrConfig(f"{root} is not an itemforge store (no manifest)")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format") != FORMAT_VERSION:
            raise ErrConfig(
                f"store format {manifest.get('format')} unsupported "
                f"(expected {FORMAT_VERSION})")
        store = cls(root, fsync_mode)
        store.manifest = manifest
        for item_dir in sorted((root / "items").iterdir()):
            if item_dir.is_dir():
                store._recover_log(item_dir.name)
        return store

    def _write_manifest(self):
        path = self.root / "manifest.json"
        path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        with open(path) as fh:
            os.fsync(fh.fileno())

    def set_roots(self, roots: dict[str, str]):
        self.manifest["roots"] = roots
        self._write_manifest()

    # -- log recovery ---------------------------------------------------------

    def _recover_log(self, item: str):
        log_path = self.root / "items" / item / "events.jsonl"
        events: list[Event] = []
        if not log_path.is_file():
            self._events[item] = events
            return
        keep_bytes = 0
        pending: list[Event] = []
        offset = 0
        with open(log_path, "rb") as fh:
            for raw in fh:
                offset += len(raw)
                if not raw.endswith(b"\n"):
                    break  # torn final line
                try:
                    record = json.loads(raw.decode())
                except (UnicodeDecodeError, json.JSONDecodeError):
                    break
                pending.append(Event.from_json(raw.decode()))
                if record.get("commit"):
                    events.extend(pending)
                    pending = []
                    keep_bytes = offset
        actual = log_path.stat().st_size
        if keep_bytes != actual:
            with open(log_path, "r+b") as fh:
                fh.truncate(keep_bytes)
                os.fsync(fh.fileno())
        for i, ev in enumerate(events):
            if ev.event_id != i:
                raise ErrStorage(f"item {item}: event ids not dense at index {i}")
        self._events[item] = events

    # -- writes ---------------------------------------------------------------

    def _lock(self, item: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(item)
            if lock is None:
                lock = threading.Lock()
                self._locks[item] = lock
            return lock

    def append_txn(self, item: str, entries: list[tuple[Event, Outcome | None]]) -> int:
        """Atomically append one execute's events (+outcomes) to an item log.

        Returns the last committed event id. Nothing is visible (in memory
        or on disk) unless the whole group commits.
        """
        if not entries:
            raise ErrStorage("empty transaction")
        with self._lock(item):
            existing = self._events.setdefault(item, [])
            expected = len(existing)
            for i, (event, _) in enumerate(entries):
                if event.event_id != expected + i:
                    raise ErrStorage(
                        f"item {item}: event id {event.event_id} breaks density "
                        f"(expected {expected + i})")
            item_dir = self.root / "items" / item
            out_dir = item_dir / "outcomes"
            try:
                new_item = not item_dir.exists()
                out_dir.mkdir(parents=True, exist_ok=True)
                for event, outcome in entries:
                    if (outcome is None) != (not event.has_outcome):
                        raise ErrStorage("event/outcome flag mismatch")
                    if outcome is not None:
                        opath = self._outcome_path(item, outcome.schema_name,
                                                   outcome.schema_version,
                                                   outcome.event_id)
                        with open(opath, "wb") as fh:
                            fh.write(outcome.document.encode())
                            if self.fsync_mode == "commit":
                                fh.flush()
                                os.fsync(fh.fileno())
                lines = []
                for i, (event, _) in enumerate(entries):
                    record = json.loads(event.to_json())
                    if i == len(entries) - 1:
                        record["commit"] = True
                    lines.append(json.dumps(record, separators=(",", ":"),
                                            sort_keys=True))
                blob = ("\n".join(lines) + "\n").encode()
                log_path = item_dir / "events.jsonl"
                with open(log_path, "ab") as fh:
                    fh.write(blob)
                    if self.fsync_mode == "commit":
                        fh.flush()
                        os.fsync(fh.fileno())
                if new_item and self.fsync_mode == "commit":
                    _fsync_dir(item_dir)
                    _fsync_dir(self.root / "items")
            except OSError as exc:
                raise ErrStorage(f"append failed for item {item}: {exc}") from exc
            existing.extend(e for e, _ in entries)
            return entries[-1][0].event_id

    # -- reads ------------------------------------------------------------------

    def items(self) -> list[str]:
        return sorted(self._events)

    def item_exists(self, item: str) -> bool:
        return bool(self._events.get(item))

    def last_event_id(self, item: str) -> int:
        events = self._events.get(item)
        if not events:
            raise ErrNotFound(f"no such item {item}")
        return len(events) - 1

    def events(self, item: str) -> list[Event]:
        events = self._events.get(item)
        if events is None:
            raise ErrNotFound(f"no such item {item}")
        return events

    def read_events(self, item: str, frm: int = 0, to: int | None = None) -> list[Event]:
        events = self.events(item)
        last = len(events) - 1
        if to is None:
            to = last
        if frm < 0 or to > last or frm > to:
            raise ErrRange(f"range ({frm}, {to}) outside 0..{last}")
        return events[frm:to + 1]

    def _outcome_path(self, item: str, schema: str, version: int, event_id: int) -> Path:
        return (self.root / "items" / item / "outcomes"
                / f"{event_id}.{schema}.v{version}.xml")

    def read_outcome(self, item: str, event_id: int) -> Outcome:
        events = self.events(item)
        if event_id < 0 or event_id >= len(events):
            raise ErrNotFound(f"item {item} has no event {event_id}")
        event = events[event_id]
        if not event.has_outcome or event.schema_ref is None:
            raise ErrNotFound(f"event {event_id} of {item} carries no outcome")
        schema, version = event.schema_ref
        path = self._outcome_path(item, schema, version, event_id)
        try:
            document = path.read_text()
        except OSError as exc:
            raise ErrStorage(f"outcome file missing: {path}") from exc
        return Outcome(item=item, schema_name=schema, schema_version=version,
                       event_id=event_id, document=document)

    # -- directory ---------------------------------------------------------------

    def add_path(self, path: str, target: str):
        self.directory[path] = target

    def remove_path(self, path: str):
        self.directory.pop(path, None)

    def resolve_path(self, path: str) -> str:
        target = self.directory.get(path.rstrip("/") or "/")
        if target is None:
            raise ErrNotFound(f"no directory entry at '{path}'")
        return target

    def list_children(self, prefix: str) -> list[tuple[str, str | None]]:
        prefix = prefix.rstrip("/")
        names: set[str] = set()
        lead = prefix + "/"
        for path in self.directory:
            if path.startswith(lead):
                names.add(path[len(lead):].split("/", 1)[0])
        return [(name, self.directory.get(f"{prefix}/{name}"))
                for name in sorted(names)]

    # -- portability ----------------------------------------------------------------

    def raw_log(self, item: str) -> bytes:
        path = self.root / "items" / item / "events.jsonl"
        return path.read_bytes()

    def outcome_files(self, item: str) -> list[tuple[str, bytes]]:
        out_dir = self.root / "items" / item / "outcomes"
        if not out_dir.is_dir():
            return []
        return [(p.name, p.read_bytes()) for p in sorted(out_dir.iterdir())]

    def restore_item(self, item: str, log: bytes, outcomes: dict[str, bytes]):
        """Write an item's records verbatim (archive import into an empty slot)."""
        if self._events.get(item):
            raise ErrStorage(f"item {item} already present; refusing to overwrite")
        item_dir = self.root / "items" / item
        out_dir = item_dir / "outcomes"
        out_dir.mkdir(parents=True, exist_ok=True)
        (item_dir / "events.jsonl").write_bytes(log)
        for name, data in outcomes.items():
            (out_dir / name).write_bytes(data)
        self._recover_log(item)
