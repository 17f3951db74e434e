"""Predefined-step payload documents.

The eight predefined steps are the only way to modify properties,
collections, viewpoints or directory entries. Each execution records an
event at /predefined/<name> whose outcome is the payload document, so the
whole mutation is replayable from the log. This module owns the payload
XML: builders (used by scripts, the description manager and clients) and
parsers (used by the engine when applying or replaying).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.etree import ElementTree as ET

from .errors import ErrSchemaViolation

STEP_NAMES = (
    "WriteProperty",
    "AddMemberToCollection",
    "RemoveMemberFromCollection",
    "AssignSlot",
    "CreateItem",
    "AddDomainPath",
    "RemoveDomainPath",
    "WriteViewpoint",
)

PREDEFINED_PREFIX = "/predefined/"


def step_path(name: str) -> str:
    return PREDEFINED_PREFIX + name


def _xml(elem: ET.Element) -> str:
    return ET.tostring(elem, encoding="unicode")


# -- builders ---------------------------------------------------------------

def write_property(name: str, value: str, declared_type: str | None = None) -> str:
    elem = ET.Element("WriteProperty", name=name)
    if declared_type:
        elem.set("type", declared_type)
    ET.SubElement(elem, "Value").text = value
    return _xml(elem)


def add_member(collection: str, target: str,
               slot_properties: list[tuple[str, str]] | None = None) -> str:
    elem = ET.Element("AddMemberToCollection", collection=collection)
    ET.SubElement(elem, "Target").text = target
    for pname, pvalue in slot_properties or []:
        ET.SubElement(elem, "SlotProperty", name=pname, value=pvalue)
    return _xml(elem)


def remove_member(collection: str, slot_id: int) -> str:
    return _xml(ET.Element("RemoveMemberFromCollection",
                           collection=collection, slotId=str(slot_id)))


def assign_slot(collection: str, slot_id: int, target: str) -> str:
    elem = ET.Element("AssignSlot", collection=collection, slotId=str(slot_id))
    ET.SubElement(elem, "Target").text = target
    return _xml(elem)


def create_item(name: str, under: str, description: str | None = None,
                version: int | None = None,
                initial_properties: list[tuple[str, str]] | None = None,
                inline_bundle: str | None = None,
                uuid: str | None = None) -> str:
    elem = ET.Element("CreateItem", name=name, under=under)
    if version is not None:
        elem.set("version", str(version))
    if uuid:
        elem.set("uuid", uuid)
    if description:
        ET.SubElement(elem, "Description").text = description
    if inline_bundle:
        ET.SubElement(elem, "InlineBundle").text = inline_bundle
    for pname, pvalue in initial_properties or []:
        ET.SubElement(elem, "InitialProperty", name=pname, value=pvalue)
    return _xml(elem)


def add_domain_path(path: str) -> str:
    return _xml(ET.Element("AddDomainPath", path=path))


def remove_domain_path(path: str) -> str:
    return _xml(ET.Element("RemoveDomainPath", path=path))


def write_viewpoint(schema: str, view: str, event_id: int | None = None,
                    document: str | None = None) -> str:
    elem = ET.Element("WriteViewpoint", schema=schema, view=view)
    if event_id is not None:
        elem.set("eventId", str(event_id))
    if document is not None:
        ET.SubElement(elem, "Document").text = document
    return _xml(elem)


def script_error(script: str, message: str) -> str:
    elem = ET.Element("ScriptError", script=script)
    ET.SubElement(elem, "Message").text = message
    return _xml(elem)


# -- parsed payloads ----------------------------------------------------------

@dataclass
class WritePropertyPayload:
    name: str
    value: str
    declared_type: str | None


@dataclass
class AddMemberPayload:
    collection: str
    target: str
    slot_properties: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class RemoveMemberPayload:
    collection: str
    slot_id: int


@dataclass
class AssignSlotPayload:
    collection: str
    slot_id: int
    target: str


@dataclass
class CreateItemPayload:
    name: str
    under: str
    description: str | None
    version: int | None
    initial_properties: list[tuple[str, str]]
    inline_bundle: str | None
    uuid: str | None


@dataclass
class DomainPathPayload:
    path: str


@dataclass
class WriteViewpointPayload:
    schema: str
    view: str
    event_id: int | None
    document: str | None


def parse_payload(step: str, document: str):
    """Parse a validated payload document into its typed form."""
    root = ET.fromstring(document)
    if root.tag != step:
        raise ErrSchemaViolation(f"payload root {root.tag} does not match step {step}")
    if step == "WriteProperty":
        value = root.find("Value")
        return WritePropertyPayload(
            name=root.get("name", ""),
            value=value.text or "" if value is not None else "",
            declared_type=root.get("type"),
        )
    if step == "AddMemberToCollection":
        return AddMemberPayload(
            collection=root.get("collection", ""),
            target=(root.findtext("Target") or "").strip(),
            slot_properties=[(p.get("name", ""), p.get("value", ""))
                             for p in root.findall("SlotProperty")],
        )
    if step == "RemoveMemberFromCollection":
        return RemoveMemberPayload(collection=root.get("collection", ""),
                                   slot_id=int(root.get("slotId", "0")))
    if step == "AssignSlot":
        return AssignSlotPayload(collection=root.get("collection", ""),
                                 slot_id=int(root.get("slotId", "0")),
                                 target=(root.findtext("Target") or "").strip())
    if step == "CreateItem":
        version = root.get("version")
        return CreateItemPayload(
            name=root.get("name", ""),
            under=root.get("under", ""),
            description=(root.findtext("Description") or "").strip() or None,
            version=int(version) if version is not None else None,
            initial_properties=[(p.get("name", ""), p.get("value", ""))
                                for p in root.findall("InitialProperty")],
            inline_bundle=root.findtext("InlineBundle"),
            uuid=root.get("uuid"),
        )
    if step in ("AddDomainPath", "RemoveDomainPath"):
        return DomainPathPayload(path=root.get("path", ""))
    if step == "WriteViewpoint":
        event_id = root.get("eventId")
        return WriteViewpointPayload(
            schema=root.get("schema", ""),
            view=root.get("view", ""),
            event_id=int(event_id) if event_id is not None else None,
            document=root.findtext("Document"),
        )
    raise ErrSchemaViolation(f"unknown predefined step '{step}'")
