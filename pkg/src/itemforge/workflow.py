"""Workflow structure and token movement.

An item's workflow is a tree of composite and elementary activities. The
token engine (`settle`) is a pure function of the tree, the activity-state
map, and the routing decisions supplied by a decider: live execution asks
scripts to decide xor-splits and loops, replay feeds back the decisions
recorded in the event log. Both paths run the exact same code, which is
what makes replayed state byte-identical to live state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from xml.etree import ElementTree as ET

from .errors import ErrBadRoute, ErrMalformedXML, ErrSchemaViolation
from .model import is_ref

WAITING = "Waiting"
STARTED = "Started"
SUSPENDED = "Suspended"
COMPLETE = "Complete"
SKIPPED = "Skipped"

TERMINAL = (COMPLETE, SKIPPED)

SEQUENCE = "sequence"
AND_SPLIT = "and-split"
XOR_SPLIT = "xor-split"
LOOP = "loop"

ROUTINGS = (SEQUENCE, AND_SPLIT, XOR_SPLIT, LOOP)

# name -> (from-state, to-state); Skip additionally requires the admin role
TRANSITIONS: dict[str, tuple[str, str]] = {
    "Start": (WAITING, STARTED),
    "Complete": (STARTED, COMPLETE),
    "Suspend": (STARTED, SUSPENDED),
    "Resume": (SUSPENDED, STARTED),
    "Skip": (WAITING, SKIPPED),
}
ADMIN_TRANSITIONS = ("Skip",)
PROCEED = "Proceed"  # reserved for predefined-step events


@dataclass
class ScriptSpec:
    """Either a pinned reference to a ScriptDesc version or an inline snippet."""

    script_item: str | None = None
    version: int | None = None
    language: str | None = None
    body: str | None = None

    @property
    def inline(self) -> bool:
        return self.body is not None


@dataclass
class Elementary:
    name: str
    role: str
    schema_ref: tuple[str, int] | None = None
    consequence: ScriptSpec | None = None
    description_path: str = ""


@dataclass
class Composite:
    name: str
    routing: str = SEQUENCE
    children: list["Composite | Elementary"] = field(default_factory=list)
    condition: ScriptSpec | None = None


@dataclass
class ActivityState:
    state: str = WAITING
    active: bool = False


@dataclass
class RoutingDecision:
    path: str
    kind: str  # xor | loop
    choice: str | bool


class DecisionMismatch(Exception):
    """Replay found a decision in the log that does not match the request."""


def recorded_decider(decisions: list[RoutingDecision]):
    """Decider that replays recorded decisions in order."""
    queue = list(decisions)

    def decide(kind: str, path: str, composite: Composite):
        if not queue:
            raise DecisionMismatch(f"no recorded decision for {kind} at {path}")
        head = queue.pop(0)
        if head.kind != kind or head.path != path:
            raise DecisionMismatch(
                f"expected decision for ({head.kind}, {head.path}), "
                f"settle asked for ({kind}, {path})")
        return head.choice

    return decide


class WorkflowInstance:
    """One item's activity tree plus per-path states."""

    def __init__(self, root: Composite, document: str, source: str):
        self.root = root
        self.document = document
        self.source = source  # provenance: "desc:<uuid>:v<n>" or "instance:e<id>"
        self.states: dict[str, ActivityState] = {}
        for path, _ in iter_paths(root):
            self.states[path] = ActivityState()

    def activity(self, path: str) -> Composite | Elementary:
        node = find_activity(self.root, path)
        if node is None:
            raise ErrBadRoute(f"no activity at path '{path}'")
        return node

    def has_path(self, path: str) -> bool:
        return path in self.states

    def finished(self) -> bool:
        return self.states["/"].state in TERMINAL

    def settle(self, decider) -> list[RoutingDecision]:
        """Advance the token to rest; returns the routing decisions taken.

        Deterministic given (structure, states, decider answers); both the
        live engine and replay call this after applying a state change.
        """
        decisions: list[RoutingDecision] = []

        def ask(kind: str, path: str, comp: Composite):
            choice = decider(kind, path, comp)
            decisions.append(RoutingDecision(path=path, kind=kind, choice=choice))
            return choice

        changed = True
        while changed:
            changed = self._visit(self.root, "/", ask)
        self._mark_active()
        return decisions

    def _visit(self, comp: Composite, path: str, ask) -> bool:
        st = self.states[path]
        if st.state in TERMINAL:
            return False
        changed = False
        if st.state == WAITING:
            st.state = STARTED
            changed = True
        kids = [(child_path(path, c.name), c) for c in comp.children]
        if comp.routing == XOR_SPLIT:
            if all(self.states[p].state == WAITING for p, _ in kids):
                choice = ask("xor", path, comp)
                names = [c.name for c in comp.children]
                if choice not in names:
                    raise ErrBadRoute(
                        f"xor-split at '{path}' chose '{choice}', not one of {names}")
                for p, c in kids:
                    if c.name != choice:
                        self._assign_subtree(p, c, SKIPPED)
                changed = True
        if comp.routing in (SEQUENCE, XOR_SPLIT, LOOP):
            entered = next(((p, c) for p, c in kids
                            if self.states[p].state not in TERMINAL), None)
            if entered is not None:
                p, c = entered
                if isinstance(c, Composite):
                    changed |= self._visit(c, p, ask)
            else:
                if comp.routing == LOOP:
                    again = ask("loop", path, comp)
                    if not isinstance(again, bool):
                        raise ErrBadRoute(
                            f"loop condition at '{path}' must yield a boolean, "
                            f"got {again!r}")
                    if again:
                        for p, c in kids:
                            self._assign_subtree(p, c, WAITING)
                        return True
                st.state = COMPLETE
                changed = True
        else:  # and-split
            all_terminal = True
            for p, c in kids:
                if self.states[p].state in TERMINAL:
                    continue
                all_terminal = False
                if isinstance(c, Composite):
                    changed |= self._visit(c, p, ask)
            if all_terminal:
                st.state = COMPLETE
                changed = True
        return changed

    def _assign_subtree(self, path: str, node: Composite | Elementary, state: str):
        self.states[path].state = state
        if isinstance(node, Composite):
            for c in node.children:
                self._assign_subtree(child_path(path, c.name), c, state)

    def _mark_active(self):
        for st in self.states.values():
            st.active = False

        def mark(node: Composite | Elementary, path: str):
            st = self.states[path]
            if st.state in TERMINAL:
                return
            if isinstance(node, Elementary):
                st.active = True
                return
            kids = [(child_path(path, c.name), c) for c in node.children]
            if node.routing == AND_SPLIT:
                for p, c in kids:
                    if self.states[p].state not in TERMINAL:
                        mark(c, p)
            else:
                entered = next(((p, c) for p, c in kids
                                if self.states[p].state not in TERMINAL), None)
                if entered is not None:
                    mark(entered[1], entered[0])

        mark(self.root, "/")

    def active_paths(self) -> list[str]:
        return sorted(p for p, st in self.states.items()
                      if st.active and isinstance(self.activity(p), Elementary))

    def doc_sha256(self) -> str:
        return hashlib.sha256(self.document.encode()).hexdigest()

    def canonical_dict(self) -> dict:
        return {
            "source": self.source,
            "doc_sha256": self.doc_sha256(),
            "activities": {
                path: {"state": st.state, "active": st.active}
                for path, st in sorted(self.states.items())
            },
        }

    def copy_states(self) -> dict[str, ActivityState]:
        return {p: replace(st) for p, st in self.states.items()}


def child_path(parent: str, name: str) -> str:
    return (parent.rstrip("/") or "") + "/" + name


def iter_paths(root: Composite):
    """Yield (path, activity) pairs, root first, document order."""
    yield "/", root

    def walk(node: Composite, path: str):
        for c in node.children:
            p = child_path(path, c.name)
            yield p, c
            if isinstance(c, Composite):
                yield from walk(c, p)

    yield from walk(root, "/")


def find_activity(root: Composite, path: str) -> Composite | Elementary | None:
    if path in ("", "/"):
        return root
    node: Composite | Elementary = root
    for part in path.strip("/").split("/"):
        if not isinstance(node, Composite):
            return None
        nxt = next((c for c in node.children if c.name == part), None)
        if nxt is None:
            return None
        node = nxt
    return node


# ---------------------------------------------------------------------------
# WorkflowDesc document format
# ---------------------------------------------------------------------------

def _parse_script(elem: ET.Element, where: str,
                  require_resolved: bool = False) -> ScriptSpec:
    code = elem.find("Code")
    if code is not None:
        return ScriptSpec(language=elem.get("language", "minipy"), body=code.text or "")
    script = elem.get("script")
    if not script:
        raise ErrSchemaViolation(
            f"{where}: condition/consequence needs either a script reference or inline Code")
    if require_resolved and not is_ref(script):
        raise ErrSchemaViolation(
            f"{where}: script reference '{script}' is not a resolved item id")
    return ScriptSpec(script_item=script, version=int(elem.get("version", "0") or 0))


def _parse_activity(elem: ET.Element, where: str, desc_source: str,
                    require_resolved: bool = False) -> Composite | Elementary:
    name = elem.get("name", "")
    if not name or "/" in name:
        raise ErrSchemaViolation(f"{where}: bad activity name '{name}'")
    here = f"{where}/{name}"
    if elem.tag == "Elementary":
        role = elem.get("role", "")
        if not role:
            raise ErrSchemaViolation(f"{here}: elementary activity needs a role")
        schema_ref = None
        if elem.get("schema"):
            schema_ref = (elem.get("schema"), int(elem.get("schemaVersion", "1")))
        consequence = None
        cons = elem.find("Consequence")
        if cons is not None:
            consequence = _parse_script(cons, here, require_resolved)
        return Elementary(name=name, role=role, schema_ref=schema_ref,
                          consequence=consequence,
                          description_path=f"{desc_source}#{here}")
    return _parse_composite(elem, here, desc_source, require_resolved)


def _parse_composite(elem: ET.Element, where: str, desc_source: str,
                     require_resolved: bool = False) -> Composite:
    routing = elem.get("routing", SEQUENCE)
    if routing not in ROUTINGS:
        raise ErrSchemaViolation(f"{where}: unknown routing '{routing}'")
    comp = Composite(name=elem.get("name", "Root"), routing=routing)
    conditions = []
    names = set()
    for child in elem:
        if child.tag == "Condition":
            conditions.append(_parse_script(child, where, require_resolved))
        elif child.tag in ("Elementary", "Composite"):
            act = _parse_activity(child, where, desc_source, require_resolved)
            if act.name in names:
                raise ErrSchemaViolation(f"{where}: duplicate activity name '{act.name}'")
            names.add(act.name)
            comp.children.append(act)
        else:
            raise ErrSchemaViolation(f"{where}: unexpected element {child.tag}")
    if routing in (XOR_SPLIT, LOOP):
        if len(conditions) != 1:
            raise ErrSchemaViolation(
                f"{where}: {routing} requires exactly one Condition")
        comp.condition = conditions[0]
    elif conditions:
        raise ErrSchemaViolation(f"{where}: {routing} does not take a Condition")
    if not comp.children:
        raise ErrSchemaViolation(f"{where}: composite has no children")
    return comp


def parse_workflow(document: str, desc_source: str = "",
                   require_resolved: bool = False) -> Composite:
    """Parse a WorkflowDesc document into an activity tree.

    Performs the semantic checks the meta-schema cannot express: routing
    values, condition presence per routing, non-empty children, unique
    sibling names. With require_resolved, script references must be item
    uuids (the form stored documents must carry; name references exist
    only inside unimported bundle files).
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise ErrMalformedXML(f"workflow document: {exc}") from exc
    if root.tag != "WorkflowDesc":
        raise ErrSchemaViolation("workflow document root must be WorkflowDesc")
    return _parse_composite(root, "", desc_source, require_resolved)


def _script_xml(tag: str, spec: ScriptSpec) -> ET.Element:
    elem = ET.Element(tag)
    if spec.inline:
        elem.set("language", spec.language or "minipy")
        code = ET.SubElement(elem, "Code")
        code.text = spec.body
    else:
        elem.set("script", spec.script_item or "")
        elem.set("version", str(spec.version or 0))
    return elem


def _activity_xml(node: Composite | Elementary) -> ET.Element:
    if isinstance(node, Elementary):
        elem = ET.Element("Elementary", name=node.name, role=node.role)
        if node.schema_ref:
            elem.set("schema", node.schema_ref[0])
            elem.set("schemaVersion", str(node.schema_ref[1]))
        if node.consequence:
            elem.append(_script_xml("Consequence", node.consequence))
        return elem
    elem = ET.Element("Composite", name=node.name, routing=node.routing)
    if node.condition:
        elem.append(_script_xml("Condition", node.condition))
    for c in node.children:
        elem.append(_activity_xml(c))
    return elem


def serialize_workflow(root: Composite, name: str | None = None) -> str:
    elem = ET.Element("WorkflowDesc", routing=root.routing)
    if name or root.name:
        elem.set("name", name or root.name)
    if root.condition:
        elem.append(_script_xml("Condition", root.condition))
    for c in root.children:
        elem.append(_activity_xml(c))
    ET.indent(elem)
    return ET.tostring(elem, encoding="unicode")


def instantiate_workflow(document: str, source: str) -> WorkflowInstance:
    root = parse_workflow(document, source)
    return WorkflowInstance(root=root, document=document, source=source)
