"""The lifecycle engine: the only write path into the object model.

Every mutation is an activity execution: ordinary activities create events
and outcomes and move viewpoints; predefined steps change properties,
collections, viewpoints and directory entries. Each execute commits
atomically (event append + outcome store + viewpoint write + token
advance); routing decisions taken by condition scripts are recorded on the
event so replay reconstructs identical state without re-running a single
script.

Concurrency: one writer per item (re-entrant, so consequence scripts can
keep writing to their own item inside the open transaction); any number of
readers. Scripts reaching into other items enqueue on those items' writers
with a timeout, and a per-call depth limit breaks recursion cycles.
"""

from __future__ import annotations

import hashlib
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from xml.etree import ElementTree as ET

from . import descriptions as descmod
from . import predefined
from .agents import SYSTEM_AGENT_ID, AgentRegistry
from .builtin_schemas import SchemaRegistry
from .descriptions import (
    AUTO_PROPERTIES,
    INSTANCE_VIEW,
    KINDS,
    META_DIR,
    DescriptionManager,
    ItemDescBundle,
    kind_bundle_doc,
    parse_item_desc,
)
from .errors import (
    ErrAccessDenied,
    ErrConstraint,
    ErrInvalidTransition,
    ErrNameTaken,
    ErrNotFound,
    ErrRange,
    ErrSchemaViolation,
    ErrScriptFailure,
    ErrStorage,
    ItemforgeError,
)
from .events import Event
from .model import Collection, ItemRef, ItemState, Outcome, Property, Slot, Viewpoint
from .predefined import PREDEFINED_PREFIX, STEP_NAMES, parse_payload, step_path
from .schema import validate
from .scripting import ScriptContext, ScriptDef, parse_script_def, run_script
from .store import Store
from .workflow import (
    ADMIN_TRANSITIONS,
    PROCEED,
    TRANSITIONS,
    Composite,
    DecisionMismatch,
    Elementary,
    ScriptSpec,
    WorkflowInstance,
    instantiate_workflow,
    parse_workflow,
    recorded_decider,
)

def _semantic_validate(schema_name: str, document: str):
    """Structure checks the meta-schemas cannot express; ErrSchemaViolation on failure.

    Applied at the write gate to every description-kind outcome, on top of
    its XSD validation.
    """
    try:
        if schema_name == "WorkflowDesc":
            parse_workflow(document, require_resolved=True)
        elif schema_name == "ItemDesc":
            parse_item_desc(document, require_resolved=True)
        elif schema_name == "ScriptDesc":
            parse_script_def(document)
        elif schema_name == "OutcomeDesc":
            root = ET.fromstring(document)
            name = root.get("schemaName", "")
            if not name:
                raise ErrSchemaViolation("OutcomeDesc needs a schemaName")
            from .schema import compile_schema
            compile_schema(root.findtext("Definition") or "", schema_name=name)
        elif schema_name == "PropertyDesc":
            descmod._parse_property_defs(ET.fromstring(document))
        elif schema_name == "CollectionDesc":
            descmod._parse_collection_defs(ET.fromstring(document))
    except ErrSchemaViolation:
        raise
    except ItemforgeError as exc:
        raise ErrSchemaViolation(str(exc)) from exc


@dataclass
class Job:
    """An offer of one legal transition of one active activity to a role."""

    item: ItemRef
    activity_path: str
    transition: str
    role: str

    def key(self) -> tuple:
        return (self.item, self.activity_path, self.transition)

    def to_dict(self) -> dict:
        return {"item": self.item, "activity_path": self.activity_path,
                "transition": self.transition, "role": self.role}


class JobsBoard:
    """Live job index by role; long-polls block on the condition variable."""

    def __init__(self):
        self._cond = threading.Condition()
        self._by_item: dict[str, list[Job]] = {}
        self._by_role: dict[str, dict[tuple, Job]] = {}

    def update_item(self, item: str, jobs: list[Job]):
        with self._cond:
            for old in self._by_item.get(item, []):
                bucket = self._by_role.get(old.role)
                if bucket:
                    bucket.pop(old.key(), None)
            self._by_item[item] = jobs
            added = False
            for job in jobs:
                self._by_role.setdefault(job.role, {})[job.key()] = job
                added = True
            if added:
                self._cond.notify_all()

    def for_role(self, role: str) -> list[Job]:
        with self._cond:
            return sorted(self._by_role.get(role, {}).values(),
                          key=lambda j: (j.item, j.activity_path, j.transition))

    def wait_for_role(self, role: str, timeout: float) -> list[Job]:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                jobs = sorted(self._by_role.get(role, {}).values(),
                              key=lambda j: (j.item, j.activity_path, j.transition))
                if jobs:
                    return jobs
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._cond.wait(remaining)


@dataclass
class KernelConfig:
    script_timeout: float = 5.0
    script_depth: int = 16
    fsync_mode: str = "commit"
    cross_item_lock_timeout: float = 10.0


# sentinel: "store the payload itself as this event's outcome"
_PAYLOAD_DOC: str = "\x00payload"


class _Txn:
    def __init__(self, item: str):
        self.item = item
        self.entries: list[tuple[Event, Outcome | None]] = []
        self.undo: list = []
        self.post_commit: list = []


class Kernel:
    """The in-process kernel: store + projections + the write path."""

    def __init__(self, store: Store, agents: AgentRegistry,
                 config: KernelConfig | None = None):
        self.store = store
        self.agents = agents
        self.config = config or KernelConfig()
        self.registry = SchemaRegistry()
        self.jobs = JobsBoard()
        self._items: dict[str, ItemState] = {}
        self._writers: dict[str, threading.RLock] = {}
        self._writers_guard = threading.Lock()
        self._open_txns: dict[str, _Txn] = {}
        self._last_ts: dict[str, int] = {}
        self._prop_rev: dict[str, set[tuple[str, str]]] = {}
        self._prop_index: dict[tuple[str, str], set[str]] = {}
        self.descriptions = DescriptionManager(self)

    # -- construction -----------------------------------------------------

    @classmethod
    def create(cls, path: str | Path, config: KernelConfig | None = None) -> "Kernel":
        config = config or KernelConfig()
        store = Store.create(path, fsync_mode=config.fsync_mode)
        agents = AgentRegistry(Path(path) / "agents.json")
        kernel = cls(store, agents, config)
        kernel._bootstrap()
        return kernel

    @classmethod
    def empty(cls, path: str | Path, config: KernelConfig | None = None) -> "Kernel":
        """A store with no bootstrap roots; the target for trace imports."""
        config = config or KernelConfig()
        store = Store.create(path, fsync_mode=config.fsync_mode)
        agents = AgentRegistry(Path(path) / "agents.json")
        return cls(store, agents, config)

    @classmethod
    def open(cls, path: str | Path, config: KernelConfig | None = None) -> "Kernel":
        config = config or KernelConfig()
        store = Store.open(path, fsync_mode=config.fsync_mode)
        agents = AgentRegistry(Path(path) / "agents.json")
        kernel = cls(store, agents, config)
        for item in store.items():
            kernel._items[item] = kernel._replay_state(item, touch_globals=True)
            kernel._last_ts[item] = kernel._tail_ts(item)
        for item in store.items():
            kernel._sync_indexes(item)
        return kernel

    def _tail_ts(self, item: str) -> int:
        events = self.store.events(item)
        return events[-1].timestamp_ms if events else 0

    def _bootstrap(self):
        """Create the self-describing root set: one meta ItemDesc per kind."""
        uuids = {kind: self._new_uuid() for kind in KINDS}
        self_bundle = kind_bundle_doc("ItemDesc")
        for kind in KINDS:
            payload = predefined.create_item(
                name=kind, under=META_DIR, description=uuids["ItemDesc"],
                version=0, inline_bundle=self_bundle, uuid=uuids[kind])
            self._create_new_item(parse_payload("CreateItem", payload), payload,
                                  SYSTEM_AGENT_ID, depth=0)
        for kind in KINDS:
            self.descriptions.author_description(uuids[kind], SYSTEM_AGENT_ID,
                                                 kind_bundle_doc(kind))
            self.descriptions.finalize_version(uuids[kind], SYSTEM_AGENT_ID)
        self.store.set_roots(uuids)

    @staticmethod
    def _new_uuid() -> str:
        from .model import new_ref
        return new_ref()

    # -- locking and transactions ----------------------------------------------

    def _writer(self, item: str) -> threading.RLock:
        with self._writers_guard:
            lock = self._writers.get(item)
            if lock is None:
                lock = threading.RLock()
                self._writers[item] = lock
            return lock

    @contextmanager
    def _locked(self, item: str, timeout: float | None = None):
        lock = self._writer(item)
        if timeout is None:
            lock.acquire()
        elif not lock.acquire(timeout=timeout):
            raise ErrScriptFailure(
                f"could not acquire writer of item {item} within {timeout}s")
        try:
            yield
        finally:
            lock.release()

    @contextmanager
    def txn(self, item: str, timeout: float | None = None):
        """Open (or join) the atomic transaction for one item's writer."""
        with self._locked(item, timeout):
            mine = item not in self._open_txns
            if mine:
                self._open_txns[item] = _Txn(item)
            try:
                yield self._open_txns[item]
            except BaseException:
                if mine:
                    self._abort(item)
                raise
            else:
                if mine:
                    self._commit(item)

    def _commit(self, item: str):
        txn = self._open_txns.pop(item)
        if txn.entries:
            self.store.append_txn(item, txn.entries)
        for hook in txn.post_commit:
            hook()
        self._sync_indexes(item)

    def _abort(self, item: str):
        txn = self._open_txns.pop(item)
        for undo in reversed(txn.undo):
            undo()
        if txn.entries and item in self._items:
            self._items[item] = self._replay_state(item)
        self._sync_indexes(item)

    def _sync_indexes(self, item: str):
        state = self._items.get(item)
        for key in self._prop_rev.get(item, set()):
            bucket = self._prop_index.get(key)
            if bucket:
                bucket.discard(item)
        keys = set()
        if state is not None:
            for prop in state.properties.values():
                key = (prop.name, prop.value)
                self._prop_index.setdefault(key, set()).add(item)
                keys.add(key)
        self._prop_rev[item] = keys
        self.jobs.update_item(item, self._legal_jobs(state) if state else [])

    def _now_ms(self, item: str) -> int:
        ts = max(int(time.time() * 1000), self._last_ts.get(item, 0))
        self._last_ts[item] = ts
        return ts

    # -- reads (kernel-model) ---------------------------------------------------

    def state(self, item: ItemRef) -> ItemState:
        st = self._items.get(item)
        if st is None:
            raise ErrNotFound(f"no such item {item}")
        return st

    def item_exists(self, item: ItemRef) -> bool:
        return item in self._items

    def get_property(self, item: ItemRef, name: str) -> Property:
        with self._locked(item):
            prop = self.state(item).property(name)
            return Property(prop.name, prop.value, prop.declared_type, prop.mutable)

    def resolve_viewpoint(self, item: ItemRef, schema_name: str, view_name: str) -> Outcome:
        with self._locked(item):
            vp = self.state(item).viewpoint(schema_name, view_name)
        return self.store.read_outcome(item, vp.event_id)

    def list_collections(self, item: ItemRef) -> list[Collection]:
        with self._locked(item):
            state = self.state(item)
            return [
                Collection(c.name, c.kind,
                           [Slot(s.slot_id, s.target, list(s.properties))
                            for s in c.slots])
                for c in state.collections.values()
            ]

    def traverse(self, item: ItemRef, collection_name: str, slot_id: int) -> ItemRef:
        with self._locked(item):
            return self.state(item).traverse(collection_name, slot_id)

    def state_bytes(self, item: ItemRef) -> bytes:
        """Canonical snapshot of the live projection (replay oracle target)."""
        with self._locked(item):
            return self.state(item).canonical_bytes()

    def item_summary(self, item: ItemRef) -> dict:
        with self._locked(item):
            state = self.state(item)
            summary = state.canonical_dict()
        summary["paths"] = sorted(p for p, t in self.store.directory.items()
                                  if t == item)
        return summary

    # -- jobs -----------------------------------------------------------------

    def _legal_jobs(self, state: ItemState) -> list[Job]:
        wf: WorkflowInstance | None = state.workflow
        if wf is None or wf.finished():
            return []
        jobs = []
        for path in wf.active_paths():
            act = wf.activity(path)
            if not isinstance(act, Elementary):
                continue
            current = wf.states[path].state
            for name, (frm, _to) in TRANSITIONS.items():
                if frm != current:
                    continue
                role = "admin" if name in ADMIN_TRANSITIONS else act.role
                jobs.append(Job(item=state.item, activity_path=path,
                                transition=name, role=role))
        return jobs

    def compute_jobs(self, item: ItemRef, agent_id: str) -> list[Job]:
        agent = self.agents.require(agent_id)
        with self._locked(item):
            jobs = self._legal_jobs(self.state(item))
        return [j for j in jobs if agent.holds(j.role)]

    # -- script plumbing ---------------------------------------------------------

    def resolve_script(self, script_item: ItemRef, version: int) -> ScriptDef:
        outcome = self.resolve_viewpoint(script_item, "ScriptDesc", str(version))
        return parse_script_def(outcome.document)

    def _script_def(self, spec: ScriptSpec, output_type: str) -> ScriptDef:
        if spec.inline:
            return ScriptDef(name="<inline>", language_tag=spec.language or "minipy",
                             inputs=[], output_type=output_type,
                             body=spec.body or "", implicit=True)
        defn = self.resolve_script(spec.script_item, spec.version or 0)
        if output_type != "any" and defn.output_type != output_type:
            raise ErrScriptFailure(
                f"script '{defn.name}' returns {defn.output_type}, "
                f"{output_type} required here")
        return defn

    def _bindings(self, state: ItemState, outcome_doc: str | None) -> dict:
        bindings: dict[str, object] = {}
        for prop in state.properties.values():
            if prop.name.isidentifier():
                bindings[prop.name] = prop.typed_value()
        if outcome_doc:
            try:
                root = ET.fromstring(outcome_doc)
            except ET.ParseError:
                return bindings
            for elem in root.iter():
                for aname, avalue in elem.attrib.items():
                    if aname.isidentifier():
                        bindings[aname] = avalue
                if len(elem) == 0 and elem.text is not None and elem.tag.isidentifier():
                    bindings[elem.tag] = elem.text
        return bindings

    def _typed_bindings(self, defn: ScriptDef, raw: dict) -> dict:
        if getattr(defn, "implicit", False):
            return dict(raw)
        converted = {}
        for name, vtype in defn.inputs:
            if name not in raw:
                raise ErrScriptFailure(f"script '{defn.name}': input '{name}' unavailable")
            value = raw[name]
            try:
                if vtype == "integer" and not isinstance(value, bool):
                    value = int(value)
                elif vtype == "decimal" and not isinstance(value, bool):
                    value = float(value)
                elif vtype == "boolean" and isinstance(value, str):
                    value = value.strip() in ("true", "1")
                elif vtype == "string":
                    value = str(value)
            except (TypeError, ValueError) as exc:
                raise ErrScriptFailure(
                    f"script '{defn.name}': input '{name}' not a {vtype}") from exc
            converted[name] = value
        return converted

    def _live_decider(self, item: str, state: ItemState, outcome_doc: str | None,
                      agent_id: str, depth: int):
        def decide(kind: str, path: str, comp: Composite):
            if comp.condition is None:
                raise ErrScriptFailure(f"{kind} at '{path}' has no condition script")
            output = "route" if kind == "xor" else "boolean"
            defn = self._script_def(comp.condition, output)
            raw = self._bindings(state, outcome_doc)
            bindings = raw if defn.implicit else self._typed_bindings(defn, raw)
            ctx = ScriptContext(item=item, activity_path=path, bindings=bindings,
                                gateway={},  # routing scripts are pure
                                timeout=self.config.script_timeout, depth=depth)
            return run_script(defn, ctx)

        return decide

    def _script_gateway(self, host: str, agent_id: str, depth: int) -> dict:
        """Kernel capability handed to consequence scripts: reads plus evented writes."""
        kernel = self

        def target(item):
            return item if item else host

        def other_timeout(item):
            return None if item == host else kernel.config.cross_item_lock_timeout

        def get_property(name, item=None):
            t = target(item)
            with kernel._locked(t, other_timeout(t)):
                return kernel.state(t).property(name).typed_value()

        def _apply(t, step, payload):
            return kernel.apply_predefined(t, agent_id, step, payload,
                                           internal=True, depth=depth + 1,
                                           timeout=other_timeout(t))

        def write_property(name, value, item=None):
            if isinstance(value, bool):
                value = "true" if value else "false"
            _apply(target(item), "WriteProperty",
                   predefined.write_property(name, str(value)))

        def add_member(collection, member, item=None):
            _apply(target(item), "AddMemberToCollection",
                   predefined.add_member(collection, member))

        def remove_member(collection, slot_id, item=None):
            _apply(target(item), "RemoveMemberFromCollection",
                   predefined.remove_member(collection, int(slot_id)))

        def assign_slot(collection, slot_id, member, item=None):
            _apply(target(item), "AssignSlot",
                   predefined.assign_slot(collection, int(slot_id), member))

        def write_viewpoint(schema, view, event_id, item=None):
            _apply(target(item), "WriteViewpoint",
                   predefined.write_viewpoint(schema, view, event_id=int(event_id)))

        def create_item(desc, version, name, under="/items", item=None, **props):
            initial = [(k, str(v)) for k, v in sorted(props.items())]
            return kernel.descriptions.instantiate(
                desc, int(version), name, agent_id,
                initial_properties=initial, under=under, internal=True,
                depth=depth + 1)

        def resolve_path(path):
            return kernel.store.resolve_path(path)

        def get_viewpoint(schema, view="last", item=None):
            return kernel.resolve_viewpoint(target(item), schema, view).document

        def execute(activity_path, transition, outcome=None, item=None):
            # scripts may invoke other activities, which may trigger scripts
            ev = kernel.execute(target(item), agent_id, activity_path, transition,
                                outcome=outcome, depth=depth + 1)
            return ev.event_id

        return {
            "get_property": get_property, "write_property": write_property,
            "add_member": add_member, "remove_member": remove_member,
            "assign_slot": assign_slot, "write_viewpoint": write_viewpoint,
            "create_item": create_item, "resolve_path": resolve_path,
            "get_viewpoint": get_viewpoint, "execute": execute,
        }

    # -- the write path ---------------------------------------------------------

    def execute(self, item: ItemRef, agent_id: str, activity_path: str,
                transition: str, outcome: str | None = None,
                depth: int = 0) -> Event:
        """Execute one workflow transition; the only ordinary write operation."""
        agent = self.agents.require(agent_id)
        if depth > self.config.script_depth:
            raise ErrScriptFailure(
                f"script depth limit ({self.config.script_depth}) exceeded")
        failure: ErrScriptFailure | None = None
        timeout = self.config.cross_item_lock_timeout if depth else None
        with self.txn(item, timeout) as txn:
            state = self.state(item)
            wf: WorkflowInstance = state.workflow
            if wf is None or not wf.has_path(activity_path):
                raise ErrInvalidTransition(
                    f"no activity '{activity_path}' on item {item}")
            act = wf.activity(activity_path)
            if not isinstance(act, Elementary):
                raise ErrInvalidTransition(
                    f"'{activity_path}' is a composite; only elementary "
                    f"activities execute")
            st = wf.states[activity_path]
            pair = TRANSITIONS.get(transition)
            if pair is None or not st.active or st.state != pair[0]:
                raise ErrInvalidTransition(
                    f"no job ({activity_path}, {transition}) on item {item}")
            role = "admin" if transition in ADMIN_TRANSITIONS else act.role
            if not agent.holds(role):
                raise ErrAccessDenied(
                    f"agent '{agent.name}' lacks role '{role}' for "
                    f"{activity_path}:{transition}")

            schema_ref = None
            if transition == "Complete" and act.schema_ref is not None:
                if outcome is None:
                    raise ErrSchemaViolation(
                        f"activity '{activity_path}' requires an outcome of "
                        f"schema {act.schema_ref[0]}")
                schema_ref = act.schema_ref
                sdoc = self.registry.get(*schema_ref)
                report = validate(outcome, sdoc)
                if not report.valid:
                    raise ErrSchemaViolation(
                        f"outcome rejected by schema {schema_ref[0]} "
                        f"v{schema_ref[1]}", violations=report.violations)
                _semantic_validate(schema_ref[0], outcome)
            elif outcome is not None:
                raise ErrSchemaViolation(
                    f"transition {transition} on '{activity_path}' takes no outcome")

            eid = state.last_event_id + 1
            event = Event(event_id=eid, timestamp_ms=self._now_ms(item),
                          agent=agent_id, activity_path=activity_path,
                          transition=transition, schema_ref=schema_ref)
            outcome_obj = None
            st.state = pair[1]
            if outcome is not None and schema_ref is not None:
                outcome_obj = Outcome(item=item, schema_name=schema_ref[0],
                                      schema_version=schema_ref[1], event_id=eid,
                                      document=outcome)
                state.viewpoints[(schema_ref[0], "last")] = Viewpoint(
                    schema_ref[0], "last", eid)
                event.viewpoint_written = "last"
                event.has_outcome = True
                event.outcome_sha256 = hashlib.sha256(outcome.encode()).hexdigest()
            event.decisions = wf.settle(
                self._live_decider(item, state, outcome, agent_id, depth))
            txn.entries.append((event, outcome_obj))
            state.last_event_id = eid

            if transition == "Complete" and act.consequence is not None:
                try:
                    if depth >= self.config.script_depth:
                        raise ErrScriptFailure(
                            f"script depth limit ({self.config.script_depth}) exceeded")
                    self._consequence(act.consequence, item, activity_path, state,
                                      outcome, agent_id, depth)
                except ErrScriptFailure as exc:
                    failure = exc
                    self._record_script_error(txn, state, agent_id,
                                              act.consequence, str(exc))
        if failure is not None:
            raise ErrScriptFailure(str(failure), event=event)
        return event

    def _consequence(self, spec: ScriptSpec, item: str, path: str,
                     state: ItemState, outcome_doc: str | None,
                     agent_id: str, depth: int):
        """Run a consequence script; its writes flow through the kernel gateway."""
        if spec.inline:
            defn = ScriptDef(name="<inline>", language_tag=spec.language or "minipy",
                             inputs=[], output_type="any", body=spec.body or "",
                             implicit=True)
        else:
            defn = self.resolve_script(spec.script_item, spec.version or 0)
        raw = self._bindings(state, outcome_doc)
        bindings = raw if defn.implicit else self._typed_bindings(defn, raw)
        ctx = ScriptContext(item=item, activity_path=path, bindings=bindings,
                            gateway=self._script_gateway(item, agent_id, depth),
                            timeout=self.config.script_timeout, depth=depth)
        return run_script(defn, ctx)

    def _record_script_error(self, txn: _Txn, state: ItemState, agent_id: str,
                             spec: ScriptSpec, message: str):
        name = spec.script_item or "<inline>"
        doc = predefined.script_error(name, message)
        eid = state.last_event_id + 1
        event = Event(event_id=eid, timestamp_ms=self._now_ms(state.item),
                      agent=agent_id, activity_path="/predefined/ScriptError",
                      transition=PROCEED, schema_ref=("ScriptError", 1),
                      has_outcome=True,
                      outcome_sha256=hashlib.sha256(doc.encode()).hexdigest())
        txn.entries.append((event, Outcome(item=state.item, schema_name="ScriptError",
                                           schema_version=1, event_id=eid,
                                           document=doc)))
        state.last_event_id = eid

    # -- predefined steps -----------------------------------------------------------

    def apply_predefined(self, item: ItemRef, agent_id: str, step: str,
                         payload: str, internal: bool = False, depth: int = 0,
                         timeout: float | None = None) -> Event:
        """Run one predefined step: the only mutation path outside data collection."""
        agent = self.agents.require(agent_id)
        if step not in STEP_NAMES:
            raise ErrNotFound(f"unknown predefined step '{step}'")
        if not internal and not agent.holds("admin"):
            raise ErrAccessDenied(
                f"agent '{agent.name}' lacks the admin role for predefined steps")
        if depth > self.config.script_depth:
            raise ErrScriptFailure(
                f"script depth limit ({self.config.script_depth}) exceeded")
        report = validate(payload, self.registry.get(step, 1))
        if not report.valid:
            raise ErrSchemaViolation(f"payload rejected for step {step}",
                                     violations=report.violations)
        parsed = parse_payload(step, payload)

        if step == "CreateItem":
            return self._apply_create_item(item, agent_id, parsed, payload, depth,
                                           timeout)

        with self.txn(item, timeout) as txn:
            state = self.state(item)
            applier = getattr(self, f"_step_{_snake(step)}")
            extra = applier(state, parsed, txn, agent_id)
            return self._append_predefined(txn, state, agent_id, step, payload,
                                           **(extra or {}))

    def _append_predefined(self, txn: _Txn, state: ItemState, agent_id: str,
                           step: str, payload: str, schema_ref=None,
                           viewpoint_written=None, viewpoint_target=None,
                           document: str | None = _PAYLOAD_DOC,
                           decisions=None) -> Event:
        eid = state.last_event_id + 1
        doc = payload if document is _PAYLOAD_DOC else document
        sref = schema_ref or (step, 1)
        event = Event(event_id=eid, timestamp_ms=self._now_ms(state.item),
                      agent=agent_id, activity_path=step_path(step),
                      transition=PROCEED, schema_ref=sref,
                      viewpoint_written=viewpoint_written,
                      viewpoint_target=viewpoint_target,
                      has_outcome=doc is not None,
                      decisions=decisions or [])
        outcome_obj = None
        if doc is not None:
            event.outcome_sha256 = hashlib.sha256(doc.encode()).hexdigest()
            outcome_obj = Outcome(item=state.item, schema_name=sref[0],
                                  schema_version=sref[1], event_id=eid, document=doc)
        txn.entries.append((event, outcome_obj))
        state.last_event_id = eid
        return event

    # each _step_* applier mutates live state and returns extra event fields

    def _step_write_property(self, state, payload, txn, agent_id):
        existing = state.properties.get(payload.name)
        if existing is not None:
            if not existing.mutable:
                raise ErrConstraint(f"property '{payload.name}' is immutable")
            if payload.declared_type and payload.declared_type != existing.declared_type:
                raise ErrConstraint(
                    f"property '{payload.name}' is {existing.declared_type}, "
                    f"cannot retype to {payload.declared_type}")
            declared = existing.declared_type
        else:
            if payload.name in AUTO_PROPERTIES:
                raise ErrConstraint(f"property '{payload.name}' is reserved")
            declared = payload.declared_type or "string"
        try:
            state.properties[payload.name] = Property(
                payload.name, payload.value, declared,
                mutable=existing.mutable if existing else True)
        except ErrConstraint:
            raise
        return None

    def _step_add_member_to_collection(self, state, payload, txn, agent_id):
        coll = state.collection(payload.collection)
        if not self.store.item_exists(payload.target):
            raise ErrConstraint(f"member target {payload.target} does not exist")
        props = [Property(n, v) for n, v in payload.slot_properties]
        if coll.kind == "dependency":
            coll.add_member(payload.target, props)
        else:
            empty = next((s for s in coll.slots if s.target is None), None)
            if empty is None:
                raise ErrConstraint(
                    f"aggregation '{coll.name}' is full; no empty slot")
            empty.target = payload.target
            empty.properties = props
        return None

    def _step_remove_member_from_collection(self, state, payload, txn, agent_id):
        coll = state.collection(payload.collection)
        coll.remove_member(payload.slot_id)
        return None

    def _step_assign_slot(self, state, payload, txn, agent_id):
        coll = state.collection(payload.collection)
        if not self.store.item_exists(payload.target):
            raise ErrConstraint(f"slot target {payload.target} does not exist")
        coll.assign_slot(payload.slot_id, payload.target)
        return None

    def _step_add_domain_path(self, state, payload, txn, agent_id):
        path = _check_path(payload.path)
        if path in self.store.directory:
            raise ErrConstraint(f"directory path '{path}' is already bound")
        self.store.add_path(path, state.item)
        txn.undo.append(lambda: self.store.remove_path(path))
        return None

    def _step_remove_domain_path(self, state, payload, txn, agent_id):
        path = _check_path(payload.path)
        bound = self.store.directory.get(path)
        if bound != state.item:
            raise ErrConstraint(f"'{path}' is not a path of item {state.item}")
        remaining = sum(1 for t in self.store.directory.values() if t == state.item)
        if remaining <= 1:
            raise ErrConstraint(f"'{path}' is the item's last directory path")
        self.store.remove_path(path)
        txn.undo.append(lambda: self.store.add_path(path, state.item))
        return None

    def _step_write_viewpoint(self, state, payload, txn, agent_id):
        if payload.view == "last":
            raise ErrConstraint("the 'last' view is engine-maintained")
        if payload.view.isdigit() and (payload.schema, payload.view) in state.viewpoints:
            raise ErrConstraint(
                f"viewpoint ({payload.schema}, {payload.view}) is a pinned "
                f"version and immutable")
        if (payload.document is None) == (payload.event_id is None):
            raise ErrSchemaViolation(
                "WriteViewpoint needs exactly one of eventId or Document")

        if payload.event_id is not None:
            target = payload.event_id
            events = self.store.events(state.item)
            txn_events = {e.event_id: e for e, _ in txn.entries}
            if 0 <= target < len(events):
                ev = events[target]
            elif target in txn_events:
                ev = txn_events[target]
            else:
                raise ErrConstraint(f"no event {target} on item {state.item}")
            if not ev.has_outcome or ev.schema_ref is None \
                    or ev.schema_ref[0] != payload.schema:
                raise ErrConstraint(
                    f"event {target} carries no {payload.schema} outcome")
            state.viewpoints[(payload.schema, payload.view)] = Viewpoint(
                payload.schema, payload.view, target)
            extra = {"schema_ref": ev.schema_ref, "viewpoint_written": payload.view,
                     "viewpoint_target": target, "document": None}
            self._maybe_register_schema(state, payload, txn, ev.event_id)
            return extra

        # inline document: becomes this event's outcome
        versions = self.registry.versions(payload.schema)
        if not versions:
            raise ErrNotFound(f"no schema named '{payload.schema}'")
        version = versions[-1]
        sdoc = self.registry.get(payload.schema, version)
        report = validate(payload.document, sdoc)
        if not report.valid:
            raise ErrSchemaViolation(
                f"viewpoint document rejected by schema {payload.schema}",
                violations=report.violations)
        _semantic_validate(payload.schema, payload.document)
        eid = state.last_event_id + 1
        decisions = None
        if payload.schema == "WorkflowDesc" and payload.view == INSTANCE_VIEW:
            decisions = self._replace_workflow(state, payload.document,
                                               f"instance:e{eid}", agent_id)
        state.viewpoints[(payload.schema, payload.view)] = Viewpoint(
            payload.schema, payload.view, eid)
        self._maybe_register_schema(state, payload, txn, eid,
                                    document=payload.document)
        return {"schema_ref": (payload.schema, version),
                "viewpoint_written": payload.view, "document": payload.document,
                "decisions": decisions}

    def _maybe_register_schema(self, state, payload, txn, target_event,
                               document: str | None = None):
        if not payload.view.isdigit() or payload.schema != "OutcomeDesc":
            return
        doc = document
        item = state.item
        version = int(payload.view)

        def hook():
            text = doc or self.store.read_outcome(item, target_event).document
            root = ET.fromstring(text)
            self.registry.register(root.get("schemaName", ""), version,
                                   root.findtext("Definition") or "", owner=item)
        # claim check happens before commit so finalize can fail cleanly
        if doc is None:
            text = self.store.read_outcome(item, target_event).document
        else:
            text = doc
        self.registry.check_claim(ET.fromstring(text).get("schemaName", ""), item)
        txn.post_commit.append(hook)

    def _replace_workflow(self, state: ItemState, document: str, source: str,
                          agent_id: str):
        new_wf = instantiate_workflow(document, source)
        old_wf: WorkflowInstance = state.workflow
        if old_wf is not None:
            for path, st in old_wf.states.items():
                if st.state == "Complete" and not new_wf.has_path(path):
                    raise ErrConstraint(
                        f"workflow edit removes completed activity '{path}'")
            for path, st in old_wf.states.items():
                if new_wf.has_path(path):
                    new_wf.states[path].state = st.state
        decisions = new_wf.settle(self._live_decider(
            state.item, state, None, agent_id, 0))
        state.workflow = new_wf
        return decisions

    # -- CreateItem --------------------------------------------------------------

    def _load_bundle(self, payload) -> tuple[ItemDescBundle, str, str]:
        """Resolve the bundle plus the workflow document and provenance source."""
        if payload.inline_bundle is not None:
            bundle = parse_item_desc(payload.inline_bundle)
            desc_label = payload.description or "bootstrap"
            base = f"bootstrap:{payload.name}"
        else:
            if not payload.description or payload.version is None:
                raise ErrSchemaViolation(
                    "CreateItem needs a Description + version or an InlineBundle")
            doc = self._pinned_document(payload.description, "ItemDesc",
                                        str(payload.version))
            bundle = parse_item_desc(doc)
            desc_label = payload.description
            base = f"desc:{payload.description}:v{payload.version}"
        if bundle.workflow_inline is not None:
            return bundle, bundle.workflow_inline, f"{base}:inline"
        wf_doc = self._pinned_document(bundle.workflow_item, "WorkflowDesc",
                                       str(bundle.workflow_version))
        return bundle, wf_doc, f"desc:{bundle.workflow_item}:v{bundle.workflow_version}"

    def _pinned_document(self, item: str, schema: str, view: str) -> str:
        """Resolve a viewpoint against the committed log only (replay-safe)."""
        if not self.store.item_exists(item):
            raise ErrNotFound(f"no such item {item}")
        vp: dict[tuple[str, str], int] = {}
        for ev in self.store.events(item):
            if ev.activity_path == step_path("WriteViewpoint"):
                target = ev.viewpoint_target if ev.viewpoint_target is not None \
                    else ev.event_id
                vp[(ev.schema_ref[0], ev.viewpoint_written)] = target
            elif ev.has_outcome and ev.schema_ref is not None:
                vp[(ev.schema_ref[0], "last")] = ev.event_id
        eid = vp.get((schema, view))
        if eid is None:
            raise ErrNotFound(f"item {item} has no viewpoint ({schema}, {view})")
        return self.store.read_outcome(item, eid).document

    def _build_item_state(self, uuid: str, payload, bundle: ItemDescBundle,
                          wf_doc: str, wf_source: str, decider) -> tuple[ItemState, list]:
        props: dict[str, Property] = {}
        defaults = {d.name: d for d in bundle.properties}
        props["Name"] = Property("Name", payload.name, "string", mutable=False)
        props["DescriptionRef"] = Property(
            "DescriptionRef", payload.description or uuid, "string", mutable=False)
        props["DescriptionVersion"] = Property(
            "DescriptionVersion", str(payload.version or 0), "string", mutable=False)
        for d in bundle.properties:
            if d.default is not None:
                props[d.name] = Property(d.name, d.default, d.declared_type,
                                         mutable=d.mutable)
        for name, value in payload.initial_properties:
            d = defaults.get(name)
            if d is None:
                raise ErrSchemaViolation(
                    f"initial property '{name}' is not declared by the description")
            try:
                props[name] = Property(name, value, d.declared_type, mutable=d.mutable)
            except ErrConstraint as exc:
                raise ErrSchemaViolation(str(exc)) from exc
        collections = {}
        for c in bundle.collections:
            slots = [Slot(slot_id=i) for i in range(c.slots)] \
                if c.kind == "aggregation" else []
            collections[c.name] = Collection(name=c.name, kind=c.kind, slots=slots)
        state = ItemState(item=uuid, properties=props, collections=collections)
        state.workflow = instantiate_workflow(wf_doc, wf_source)
        decisions = state.workflow.settle(decider)
        return state, decisions

    def _apply_create_item(self, desc_item: str, agent_id: str, parsed,
                           payload: str, depth: int, timeout: float | None) -> Event:
        if parsed.uuid is None:
            parsed.uuid = self._new_uuid()
            payload = predefined.create_item(
                name=parsed.name, under=parsed.under, description=parsed.description,
                version=parsed.version, initial_properties=parsed.initial_properties,
                inline_bundle=parsed.inline_bundle, uuid=parsed.uuid)
        with self.txn(desc_item, timeout) as txn:
            state = self.state(desc_item)
            self._create_new_item(parsed, payload, agent_id, depth)
            return self._append_predefined(txn, state, agent_id, "CreateItem", payload)

    def _create_new_item(self, parsed, payload: str, agent_id: str, depth: int) -> str:
        """Commit the birth event of a brand-new item (its own transaction)."""
        uuid = parsed.uuid
        if not parsed.name or "/" in parsed.name:
            raise ErrSchemaViolation(f"bad item name '{parsed.name}'")
        path = _check_path(parsed.under.rstrip("/") + "/" + parsed.name)
        if path in self.store.directory:
            raise ErrNameTaken(f"directory path '{path}' is already bound")
        if self.store.item_exists(uuid) or uuid in self._items:
            raise ErrConstraint(f"item {uuid} already exists")
        bundle, wf_doc, wf_source = self._load_bundle(parsed)
        state, decisions = self._build_item_state(
            uuid, parsed, bundle, wf_doc, wf_source,
            self._live_decider(uuid, ItemState(item=uuid), None, agent_id, depth))
        doc_hash = hashlib.sha256(payload.encode()).hexdigest()
        event = Event(event_id=0, timestamp_ms=self._now_ms(uuid), agent=agent_id,
                      activity_path=step_path("CreateItem"), transition=PROCEED,
                      schema_ref=("CreateItem", 1), has_outcome=True,
                      decisions=decisions, outcome_sha256=doc_hash)
        outcome = Outcome(item=uuid, schema_name="CreateItem", schema_version=1,
                          event_id=0, document=payload)
        state.last_event_id = 0
        self.store.append_txn(uuid, [(event, outcome)])
        self._items[uuid] = state
        self.store.add_path(path, uuid)
        self._sync_indexes(uuid)
        return uuid

    # -- replay --------------------------------------------------------------------

    def replay_item(self, item: ItemRef, up_to: int | None = None) -> ItemState:
        """Reconstruct ItemState purely from the event log; no script re-runs."""
        if not self.store.item_exists(item):
            raise ErrNotFound(f"no such item {item}")
        last = self.store.last_event_id(item)
        if up_to is not None and (up_to < 0 or up_to > last):
            raise ErrRange(f"up_to {up_to} outside 0..{last}")
        return self._replay_state(item, up_to)

    def _replay_state(self, item: str, up_to: int | None = None,
                      touch_globals: bool = False) -> ItemState:
        events = self.store.events(item)
        stop = len(events) - 1 if up_to is None else up_to
        state = ItemState(item=item)
        for ev in events[:stop + 1]:
            self._apply_event(state, ev, touch_globals)
        return state

    def _apply_event(self, state: ItemState, ev: Event, touch_globals: bool):
        path = ev.activity_path
        try:
            if path.startswith(PREDEFINED_PREFIX):
                self._replay_predefined(state, ev, touch_globals)
            else:
                wf: WorkflowInstance = state.workflow
                if wf is None or not wf.has_path(path):
                    raise ErrStorage(f"event references unknown activity '{path}'")
                frm, to = TRANSITIONS[ev.transition]
                st = wf.states[path]
                if st.state != frm:
                    raise ErrStorage(
                        f"illegal transition in log: {ev.transition} from {st.state}")
                st.state = to
                if ev.has_outcome and ev.schema_ref is not None:
                    state.viewpoints[(ev.schema_ref[0], "last")] = Viewpoint(
                        ev.schema_ref[0], "last", ev.event_id)
                wf.settle(recorded_decider(ev.decisions))
        except DecisionMismatch as exc:
            raise ErrStorage(f"replay of item {state.item} event {ev.event_id}: "
                             f"{exc}") from exc
        state.last_event_id = ev.event_id

    def _replay_predefined(self, state: ItemState, ev: Event, touch_globals: bool):
        step = ev.activity_path[len(PREDEFINED_PREFIX):]
        if step == "ScriptError":
            return
        if step == "CreateItem":
            payload = parse_payload(
                "CreateItem", self.store.read_outcome(state.item, ev.event_id).document)
            if ev.event_id == 0 and payload.uuid == state.item:
                bundle, wf_doc, wf_source = self._load_bundle(payload)
                built, _ = self._build_item_state(
                    state.item, payload, bundle, wf_doc, wf_source,
                    recorded_decider(ev.decisions))
                state.properties = built.properties
                state.collections = built.collections
                state.workflow = built.workflow
                if touch_globals:
                    path = payload.under.rstrip("/") + "/" + payload.name
                    self.store.add_path(path, state.item)
            return
        if step == "WriteViewpoint":
            schema = ev.schema_ref[0]
            view = ev.viewpoint_written
            target = ev.viewpoint_target if ev.viewpoint_target is not None \
                else ev.event_id
            state.viewpoints[(schema, view)] = Viewpoint(schema, view, target)
            if ev.has_outcome and schema == "WorkflowDesc" and view == INSTANCE_VIEW:
                doc = self.store.read_outcome(state.item, ev.event_id).document
                new_wf = instantiate_workflow(doc, f"instance:e{ev.event_id}")
                old_wf: WorkflowInstance = state.workflow
                if old_wf is not None:
                    for p, st in old_wf.states.items():
                        if new_wf.has_path(p):
                            new_wf.states[p].state = st.state
                new_wf.settle(recorded_decider(ev.decisions))
                state.workflow = new_wf
            if touch_globals and view.isdigit() and schema == "OutcomeDesc":
                text = self.store.read_outcome(state.item, target).document
                root = ET.fromstring(text)
                self.registry.register(root.get("schemaName", ""), int(view),
                                       root.findtext("Definition") or "",
                                       owner=state.item)
            return
        payload = parse_payload(
            step, self.store.read_outcome(state.item, ev.event_id).document)
        if step == "WriteProperty":
            existing = state.properties.get(payload.name)
            declared = existing.declared_type if existing \
                else (payload.declared_type or "string")
            state.properties[payload.name] = Property(
                payload.name, payload.value, declared,
                mutable=existing.mutable if existing else True)
        elif step == "AddMemberToCollection":
            coll = state.collection(payload.collection)
            props = [Property(n, v) for n, v in payload.slot_properties]
            if coll.kind == "dependency":
                coll.add_member(payload.target, props)
            else:
                empty = next(s for s in coll.slots if s.target is None)
                empty.target = payload.target
                empty.properties = props
        elif step == "RemoveMemberFromCollection":
            state.collection(payload.collection).remove_member(payload.slot_id)
        elif step == "AssignSlot":
            state.collection(payload.collection).assign_slot(payload.slot_id,
                                                             payload.target)
        elif step == "AddDomainPath":
            if touch_globals:
                self.store.add_path(payload.path, state.item)
        elif step == "RemoveDomainPath":
            if touch_globals:
                self.store.remove_path(payload.path)
        else:
            raise ErrStorage(f"unknown predefined step in log: {step}")

    # -- audit ---------------------------------------------------------------------

    def audit(self) -> list[str]:
        """Full-store invariant check; returns human-readable violations."""
        problems: list[str] = []
        for item in self.store.items():
            problems.extend(self._audit_item(item))
        for path, target in self.store.directory.items():
            if not self.store.item_exists(target):
                problems.append(f"directory '{path}' targets missing item {target}")
        return problems

    def _audit_item(self, item: str) -> list[str]:
        problems = []
        events = self.store.events(item)
        for i, ev in enumerate(events):
            if ev.event_id != i:
                problems.append(f"{item}: event ids not dense at {i}")
            if i and ev.timestamp_ms < events[i - 1].timestamp_ms:
                problems.append(f"{item}: timestamps decrease at event {i}")
            if self.agents.get(ev.agent) is None:
                problems.append(f"{item}: event {i} agent {ev.agent} unresolvable")
            if ev.has_outcome:
                try:
                    outcome = self.store.read_outcome(item, i)
                except ItemforgeError as exc:
                    problems.append(f"{item}: event {i} outcome unreadable: {exc}")
                    continue
                digest = hashlib.sha256(outcome.document.encode()).hexdigest()
                if ev.outcome_sha256 and digest != ev.outcome_sha256:
                    problems.append(f"{item}: event {i} outcome bytes changed")
                if self.registry.has(*ev.schema_ref):
                    report = validate(outcome.document,
                                      self.registry.get(*ev.schema_ref))
                    if not report.valid:
                        problems.append(
                            f"{item}: stored outcome {i} fails schema "
                            f"{ev.schema_ref}: {report.violations[:3]}")
                else:
                    problems.append(f"{item}: event {i} pins unknown schema "
                                    f"{ev.schema_ref}")
        try:
            replayed = self._replay_state(item)
        except ItemforgeError as exc:
            problems.append(f"{item}: replay failed: {exc}")
            return problems
        live = self._items.get(item)
        if live is None:
            problems.append(f"{item}: no live projection")
        elif replayed.canonical_bytes() != live.canonical_bytes():
            problems.append(f"{item}: replayed state differs from projection")
        for (schema, view), vp in replayed.viewpoints.items():
            if vp.event_id < 0 or vp.event_id >= len(events):
                problems.append(f"{item}: viewpoint ({schema},{view}) dangles")
                continue
            target = events[vp.event_id]
            if not target.has_outcome or target.schema_ref is None \
                    or target.schema_ref[0] != schema:
                problems.append(
                    f"{item}: viewpoint ({schema},{view}) -> event "
                    f"{vp.event_id} without a {schema} outcome")
        for coll in replayed.collections.values():
            for slot in coll.slots:
                if slot.target is not None and not self.store.item_exists(slot.target):
                    problems.append(
                        f"{item}: collection {coll.name} slot {slot.slot_id} "
                        f"targets missing item {slot.target}")
        wf: WorkflowInstance = replayed.workflow
        if wf is not None and not wf.finished() and not wf.active_paths():
            problems.append(f"{item}: workflow unfinished but no active activity")
        return problems


def _snake(step: str) -> str:
    out = []
    for i, ch in enumerate(step):
        if ch.isupper() and i:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


def _check_path(path: str) -> str:
    if not path.startswith("/") or path.rstrip("/") != path or "//" in path:
        raise ErrConstraint(f"bad directory path '{path}'")
    return path


