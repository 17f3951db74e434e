"""Descriptions as items: bundles, versioning, instantiation, promotion.

A description item of kind K holds documents of meta-schema K as ordinary
outcomes, authored through its own editing workflow and pinned by numeric
viewpoints at finalization. ItemDesc bundles compose a workflow, property
declarations, outcome schema references and collection shapes; instantiate
builds a fresh item from a finalized bundle version.

The bootstrap root set is six ItemDesc-kind meta items (one per kind),
created at store initialization. Their own shape comes from a built-in
bundle; their version-1 content is authored and finalized through the
normal execution path, so even meta history is fully evented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.etree import ElementTree as ET

from . import predefined
from .errors import (
    ErrAccessDenied,
    ErrMalformedXML,
    ErrNoDraft,
    ErrNotFound,
    ErrSchemaViolation,
)
from .model import PROPERTY_TYPES, ItemRef, new_ref
from .schema import check_lexical
from .workflow import (
    LOOP,
    WAITING,
    Composite,
    Elementary,
    ScriptSpec,
    parse_workflow,
    serialize_workflow,
)

KINDS = ("ItemDesc", "WorkflowDesc", "PropertyDesc", "OutcomeDesc",
         "CollectionDesc", "ScriptDesc")

META_DIR = "/desc/meta"
EDIT_PATH = "/EditDefinition"
INSTANCE_VIEW = "instance"  # reserved view name for instance-workflow edits

# properties every item carries, written at creation, never mutable
AUTO_PROPERTIES = ("Name", "DescriptionRef", "DescriptionVersion")


@dataclass
class PropertyDef:
    name: str
    declared_type: str
    mutable: bool = True
    default: str | None = None


@dataclass
class CollectionDef:
    name: str
    kind: str
    slots: int = 0
    member_item: str | None = None
    member_version: int | None = None


@dataclass
class OutcomeRef:
    schema: str
    item: str | None  # OutcomeDesc item; None = built-in schema
    version: int


@dataclass
class ItemDescBundle:
    workflow_item: str | None = None
    workflow_version: int | None = None
    workflow_inline: str | None = None
    properties: list[PropertyDef] = field(default_factory=list)
    outcomes: list[OutcomeRef] = field(default_factory=list)
    collections: list[CollectionDef] = field(default_factory=list)

    def references(self) -> list[str]:
        refs = []
        if self.workflow_item:
            refs.append(self.workflow_item)
        refs.extend(o.item for o in self.outcomes if o.item)
        refs.extend(c.member_item for c in self.collections if c.member_item)
        return refs


def _parse_property_defs(parent: ET.Element) -> list[PropertyDef]:
    defs = []
    for p in parent.findall("PropertyDef"):
        name = p.get("name", "")
        declared = p.get("type", "string")
        if declared not in PROPERTY_TYPES:
            raise ErrSchemaViolation(f"property '{name}': unknown type '{declared}'")
        default = p.get("default")
        if default is not None and not check_lexical(declared, default):
            raise ErrSchemaViolation(
                f"property '{name}': default '{default}' is not a valid {declared}")
        if name in AUTO_PROPERTIES:
            raise ErrSchemaViolation(f"property '{name}' is reserved")
        defs.append(PropertyDef(name=name, declared_type=declared,
                                mutable=p.get("mutable", "true") in ("true", "1"),
                                default=default))
    if len({d.name for d in defs}) != len(defs):
        raise ErrSchemaViolation("duplicate property names in description")
    return defs


def _parse_collection_defs(parent: ET.Element) -> list[CollectionDef]:
    defs = []
    for c in parent.findall("CollectionDef"):
        kind = c.get("kind", "")
        if kind not in ("dependency", "aggregation"):
            raise ErrSchemaViolation(f"collection kind '{kind}' unknown")
        mv = c.get("memberVersion")
        defs.append(CollectionDef(
            name=c.get("name", ""), kind=kind, slots=int(c.get("slots", "0")),
            member_item=c.get("memberItem"), member_version=int(mv) if mv else None))
    if len({d.name for d in defs}) != len(defs):
        raise ErrSchemaViolation("duplicate collection names in description")
    return defs


def parse_item_desc(document: str, require_resolved: bool = False) -> ItemDescBundle:
    """Parse and semantically check an ItemDesc bundle document."""
    from .model import is_ref

    def check_ref(ref: str | None, what: str):
        if require_resolved and ref and not is_ref(ref):
            raise ErrSchemaViolation(
                f"{what} reference '{ref}' is not a resolved item id")

    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise ErrMalformedXML(f"item description: {exc}") from exc
    if root.tag != "ItemDesc":
        raise ErrSchemaViolation("bundle root must be ItemDesc")
    bundle = ItemDescBundle()
    wf = root.find("Workflow")
    if wf is None:
        raise ErrSchemaViolation("ItemDesc needs a Workflow element")
    inline = wf.findtext("Inline")
    if inline is not None:
        bundle.workflow_inline = inline
        parse_workflow(inline, require_resolved=require_resolved)  # semantic gate
    else:
        bundle.workflow_item = wf.get("item")
        bundle.workflow_version = int(wf.get("version", "0") or 0)
        if not bundle.workflow_item or not bundle.workflow_version:
            raise ErrSchemaViolation(
                "Workflow element needs either an Inline document or item+version")
        check_ref(bundle.workflow_item, "workflow")
    props = root.find("Properties")
    if props is not None:
        bundle.properties = _parse_property_defs(props)
    outs = root.find("Outcomes")
    if outs is not None:
        seen = set()
        for o in outs.findall("OutcomeRef"):
            ref = OutcomeRef(schema=o.get("schema", ""), item=o.get("item"),
                             version=int(o.get("version", "1")))
            if ref.schema in seen:
                raise ErrSchemaViolation(f"duplicate outcome schema '{ref.schema}'")
            seen.add(ref.schema)
            check_ref(ref.item, f"outcome '{ref.schema}'")
            bundle.outcomes.append(ref)
    colls = root.find("Collections")
    if colls is not None:
        bundle.collections = _parse_collection_defs(colls)
        for c in bundle.collections:
            check_ref(c.member_item, f"collection '{c.name}' member")
    return bundle


def serialize_item_desc(bundle: ItemDescBundle) -> str:
    root = ET.Element("ItemDesc")
    wf = ET.SubElement(root, "Workflow")
    if bundle.workflow_inline is not None:
        ET.SubElement(wf, "Inline").text = bundle.workflow_inline
    else:
        wf.set("item", bundle.workflow_item or "")
        wf.set("version", str(bundle.workflow_version or 0))
    if bundle.properties:
        props = ET.SubElement(root, "Properties")
        for d in bundle.properties:
            p = ET.SubElement(props, "PropertyDef", name=d.name, type=d.declared_type,
                              mutable="true" if d.mutable else "false")
            if d.default is not None:
                p.set("default", d.default)
    if bundle.outcomes:
        outs = ET.SubElement(root, "Outcomes")
        for o in bundle.outcomes:
            e = ET.SubElement(outs, "OutcomeRef", schema=o.schema,
                              version=str(o.version))
            if o.item:
                e.set("item", o.item)
    if bundle.collections:
        colls = ET.SubElement(root, "Collections")
        for c in bundle.collections:
            e = ET.SubElement(colls, "CollectionDef", name=c.name, kind=c.kind)
            if c.kind == "aggregation":
                e.set("slots", str(c.slots))
            if c.member_item:
                e.set("memberItem", c.member_item)
                e.set("memberVersion", str(c.member_version or 1))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode")


def edit_loop_workflow(schema_name: str) -> str:
    """The description-editing workflow: an endless loop around EditDefinition."""
    root = Composite(
        name="DescriptionLifecycle", routing=LOOP,
        condition=ScriptSpec(language="minipy", body="True"),
        children=[Elementary(name="EditDefinition", role="designer",
                             schema_ref=(schema_name, 1))],
    )
    return serialize_workflow(root, name="DescriptionLifecycle")


def kind_bundle_doc(kind: str) -> str:
    """The ItemDesc bundle describing description items of one kind."""
    bundle = ItemDescBundle(
        workflow_inline=edit_loop_workflow(kind),
        properties=[PropertyDef(name="DescKind", declared_type="string",
                                mutable=False, default=kind)],
        outcomes=[OutcomeRef(schema=kind, item=None, version=1)],
        collections=[CollectionDef(name="References", kind="dependency")],
    )
    return serialize_item_desc(bundle)


@dataclass
class VersionTag:
    version: int
    finalized_at: int  # event id on the description item
    view_name: str


class DescriptionManager:
    """Authoring, versioning and instantiation on top of the kernel write path."""

    def __init__(self, kernel):
        self.kernel = kernel

    # -- helpers ---------------------------------------------------------

    def kind_of(self, desc: ItemRef) -> str:
        state = self.kernel.state(desc)
        try:
            return state.property("DescKind").value
        except ErrNotFound:
            raise ErrNotFound(f"item {desc} is not a description item") from None

    def versions_of(self, desc: ItemRef) -> list[int]:
        state = self.kernel.state(desc)
        kind = self.kind_of(desc)
        return sorted(int(v.view_name) for (s, v_name), v in state.viewpoints.items()
                      if s == kind and v_name.isdigit())

    def _require_role(self, agent: str, *roles: str):
        record = self.kernel.agents.get(agent)
        if record is None:
            raise ErrAccessDenied(f"unknown agent {agent}")
        if not set(roles) & set(record.roles):
            raise ErrAccessDenied(
                f"agent '{record.name}' holds none of the roles {list(roles)}")

    # -- operations ---------------------------------------------------------

    def author_description(self, desc: ItemRef, agent: str, document: str):
        """Store a draft through the description item's own editing activity."""
        state = self.kernel.state(desc)
        self.kind_of(desc)  # must be a description item
        wf = state.workflow
        if not wf.has_path(EDIT_PATH):
            raise ErrNotFound(f"item {desc} has no {EDIT_PATH} activity")
        if wf.states[EDIT_PATH].state == WAITING:
            self.kernel.execute(desc, agent, EDIT_PATH, "Start")
        return self.kernel.execute(desc, agent, EDIT_PATH, "Complete",
                                   outcome=document)

    def finalize_version(self, desc: ItemRef, agent: str) -> VersionTag:
        """Pin the newest draft under the next version number.

        Serializes on the description item's writer, so version numbers
        cannot race.
        """
        self._require_role(agent, "designer", "admin")
        kernel = self.kernel
        with kernel.txn(desc):
            state = kernel.state(desc)
            kind = self.kind_of(desc)
            last = state.viewpoints.get((kind, "last"))
            if last is None:
                raise ErrNoDraft(f"description {desc} has no draft to finalize")
            versions = self.versions_of(desc)
            if versions:
                newest_pinned = state.viewpoints[(kind, str(versions[-1]))].event_id
                if last.event_id <= newest_pinned:
                    raise ErrNoDraft(f"description {desc} has no draft newer "
                                     f"than version {versions[-1]}")
            version = (versions[-1] + 1) if versions else 1
            draft = kernel.store.read_outcome(desc, last.event_id)

            # referenced description items become References members
            refs: list[str] = []
            if kind == "ItemDesc":
                refs = parse_item_desc(draft.document).references()
            elif kind == "WorkflowDesc":
                root = parse_workflow(draft.document)

                def collect(node):
                    if isinstance(node, Composite):
                        if node.condition and node.condition.script_item:
                            refs.append(node.condition.script_item)
                        for c in node.children:
                            collect(c)
                    elif node.consequence and node.consequence.script_item:
                        refs.append(node.consequence.script_item)
                collect(root)
            elif kind == "OutcomeDesc":
                doc = ET.fromstring(draft.document)
                kernel.registry.check_claim(doc.get("schemaName", ""), desc)

            event = kernel.apply_predefined(
                desc, agent, "WriteViewpoint",
                predefined.write_viewpoint(kind, str(version),
                                           event_id=last.event_id),
                internal=True)
            existing = {s.target for s in state.collections["References"].slots} \
                if "References" in state.collections else set()
            for ref in refs:
                if ref not in existing:
                    kernel.apply_predefined(
                        desc, agent, "AddMemberToCollection",
                        predefined.add_member("References", ref), internal=True)
                    existing.add(ref)
        return VersionTag(version=version, finalized_at=event.event_id,
                          view_name=str(version))

    def instantiate(self, desc: ItemRef, version: int, name: str, agent: str,
                    initial_properties: list[tuple[str, str]] | None = None,
                    under: str = "/items", internal: bool = False,
                    depth: int = 0) -> ItemRef:
        """Create a new item from a finalized bundle version."""
        if not internal:
            self._require_role(agent, "designer", "admin")
        kind = self.kind_of(desc)
        if kind != "ItemDesc":
            raise ErrSchemaViolation(
                f"only ItemDesc descriptions are instantiable, {desc} holds {kind}")
        state = self.kernel.state(desc)
        if (kind, str(version)) not in state.viewpoints:
            raise ErrNotFound(f"description {desc} has no finalized version {version}")
        uuid = new_ref()
        payload = predefined.create_item(
            name=name, under=under, description=desc, version=version,
            initial_properties=initial_properties or [], uuid=uuid)
        self.kernel.apply_predefined(desc, agent, "CreateItem", payload,
                                     internal=True, depth=depth)
        return uuid

    def edit_instance_workflow(self, item: ItemRef, agent: str, new_workflow: str):
        """Replace one item's live workflow; admin predefined step, fully evented."""
        payload = predefined.write_viewpoint("WorkflowDesc", INSTANCE_VIEW,
                                             document=new_workflow)
        return self.kernel.apply_predefined(item, agent, "WriteViewpoint", payload)

    def promote_to_description(self, item: ItemRef, desc: ItemRef, agent: str) -> VersionTag:
        """Copy an edited instance workflow back into its description."""
        state = self.kernel.state(item)
        try:
            ref = state.property("DescriptionRef").value
        except ErrNotFound:
            raise ErrNotFound(f"item {item} has no description lineage") from None
        if ref != desc:
            raise ErrNotFound(f"item {item} was not instantiated from {desc}")
        vp = state.viewpoints.get(("WorkflowDesc", INSTANCE_VIEW))
        if vp is None:
            raise ErrNoDraft(f"item {item} carries no instance-workflow edit")
        wf_doc = self.kernel.store.read_outcome(item, vp.event_id).document
        versions = self.versions_of(desc)
        if not versions:
            raise ErrNotFound(f"description {desc} has no finalized version")
        base = self.kernel.resolve_viewpoint(desc, "ItemDesc", str(versions[-1]))
        bundle = parse_item_desc(base.document)
        bundle.workflow_item = None
        bundle.workflow_version = None
        bundle.workflow_inline = wf_doc
        self.author_description(desc, agent, serialize_item_desc(bundle))
        return self.finalize_version(desc, agent)
