"""Description bundle archives: a directory tree of description documents
plus a manifest, imported as a unit.

Bundle layout (zip):

    manifest.json   {"bundle-format": 1, "descriptions": [
                        {"name": "MeasurementSchema", "kind": "OutcomeDesc",
                         "file": "schemas/measurement.xml"}, ...]}
    schemas/measurement.xml, workflows/assembly.xml, ...

Documents reference each other by entry name (script="PassFail",
Workflow ref="AssemblyWorkflow", OutcomeRef ref="MeasurementSchema",
CollectionDef memberRef="SubPartDesc"); import rewrites those references
to item uuids and pinned versions before authoring, so the stored
documents are fully resolved. Import is all-or-nothing against invalid
bundles: every file is validated before the first write.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from xml.etree import ElementTree as ET

from .descriptions import KINDS, VersionTag
from .errors import ErrNotFound, ErrSchemaViolation
from .model import is_ref
from .schema import validate

BUNDLE_FORMAT = 1

# authoring order: dependencies before dependents
_KIND_ORDER = ("OutcomeDesc", "ScriptDesc", "PropertyDesc", "CollectionDesc",
               "WorkflowDesc", "ItemDesc")


@dataclass
class BundleEntry:
    name: str
    kind: str
    file: str
    document: str = ""


def make_bundle(entries: list[tuple[str, str, str]]) -> bytes:
    """Build a bundle archive from (name, kind, document) triples."""
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
        manifest = {"bundle-format": BUNDLE_FORMAT, "descriptions": []}
        for i, (name, kind, document) in enumerate(entries):
            fname = f"descriptions/{i:02d}_{name}.xml"
            manifest["descriptions"].append(
                {"name": name, "kind": kind, "file": fname})
            zf.writestr(fname, document)
        zf.writestr("manifest.json", json.dumps(manifest, indent=2))
    return buffer.getvalue()


def read_bundle(archive: bytes) -> list[BundleEntry]:
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive))
    except zipfile.BadZipFile as exc:
        raise ErrSchemaViolation(f"not a bundle archive: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise ErrSchemaViolation("bundle has no manifest.json") from None
        if manifest.get("bundle-format") != BUNDLE_FORMAT:
            raise ErrSchemaViolation(
                f"unsupported bundle format {manifest.get('bundle-format')}")
        entries = []
        seen = set()
        for record in manifest.get("descriptions", []):
            name, kind, file = record.get("name"), record.get("kind"), record.get("file")
            if not name or name in seen:
                raise ErrSchemaViolation(f"bad or duplicate bundle entry name {name!r}")
            seen.add(name)
            if kind not in KINDS:
                raise ErrSchemaViolation(f"entry '{name}': unknown kind {kind!r}")
            try:
                document = zf.read(file).decode()
            except KeyError:
                raise ErrSchemaViolation(f"entry '{name}': file {file!r} missing") from None
            entries.append(BundleEntry(name=name, kind=kind, file=file,
                                       document=document))
    if not entries:
        raise ErrSchemaViolation("bundle declares no descriptions")
    return entries


def _rewrite_refs(entry: BundleEntry, resolve) -> str:
    """Replace name references with (uuid, finalized version) pins."""
    root = ET.fromstring(entry.document)
    if entry.kind == "WorkflowDesc":
        for hook in root.iter():
            if hook.tag in ("Condition", "Consequence"):
                ref = hook.get("script")
                if ref and not is_ref(ref):
                    uuid, version = resolve(ref, "ScriptDesc", entry)
                    hook.set("script", uuid)
                    hook.set("version", str(version))
    elif entry.kind == "ItemDesc":
        wf = root.find("Workflow")
        if wf is not None:
            ref = wf.get("ref") or wf.get("item")
            if ref and not is_ref(ref):
                uuid, version = resolve(ref, "WorkflowDesc", entry)
                wf.attrib.pop("ref", None)
                wf.set("item", uuid)
                wf.set("version", str(version))
        outs = root.find("Outcomes")
        if outs is not None:
            for o in outs.findall("OutcomeRef"):
                ref = o.get("ref") or o.get("item")
                if ref and not is_ref(ref):
                    uuid, version = resolve(ref, "OutcomeDesc", entry)
                    o.attrib.pop("ref", None)
                    o.set("item", uuid)
                    o.set("version", str(version))
        colls = root.find("Collections")
        if colls is not None:
            for c in colls.findall("CollectionDef"):
                ref = c.get("memberRef") or c.get("memberItem")
                if ref and not is_ref(ref):
                    uuid, version = resolve(ref, "ItemDesc", entry)
                    c.attrib.pop("memberRef", None)
                    c.set("memberItem", uuid)
                    c.set("memberVersion", str(version))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode")


def import_bundle(kernel, archive: bytes, agent_id: str) -> list[VersionTag]:
    """Author and finalize every description in the archive; all-or-nothing
    against invalid content (every file is validated before the first write)."""
    import uuid as _uuid

    from .kernel import _semantic_validate

    agent = kernel.agents.require(agent_id)
    if not agent.holds("admin"):
        from .errors import ErrAccessDenied
        raise ErrAccessDenied(
            f"agent '{agent.name}' lacks the admin role for bundle import")
    entries = read_bundle(archive)
    by_name = {e.name: e for e in entries}
    ordered = sorted(entries, key=lambda e: _KIND_ORDER.index(e.kind))

    def make_resolver(uuids: dict[str, str], finalized: dict[str, VersionTag]):
        def resolve(name: str, expected_kind: str, entry: BundleEntry):
            target = by_name.get(name)
            if target is not None:
                if target.kind != expected_kind:
                    raise ErrSchemaViolation(
                        f"{entry.file}: '{name}' is a {target.kind}, "
                        f"expected {expected_kind}")
                tag = finalized.get(name)
                if tag is not None:
                    return uuids[name], tag.version
                uuid = uuids[name]
                versions = kernel.descriptions.versions_of(uuid) \
                    if kernel.store.item_exists(uuid) else []
                return uuid, (versions[-1] + 1) if versions else 1
            try:
                uuid = kernel.store.resolve_path(f"/desc/{name}")
            except ErrNotFound:
                raise ErrSchemaViolation(
                    f"{entry.file}: reference '{name}' is not in the bundle "
                    f"or the store") from None
            versions = kernel.descriptions.versions_of(uuid)
            if not versions:
                raise ErrSchemaViolation(
                    f"{entry.file}: '{name}' has no finalized version")
            return uuid, versions[-1]
        return resolve

    # dry run: rewrite against placeholder ids, then validate fully
    placeholders = {e.name: str(_uuid.uuid5(_uuid.NAMESPACE_URL,
                                            f"itemforge:bundle:{e.name}"))
                    for e in entries}
    dry_resolve = make_resolver(placeholders, {})
    for entry in ordered:
        document = _rewrite_refs(entry, dry_resolve)
        report = validate(document, kernel.registry.get(entry.kind, 1))
        if not report.valid:
            raise ErrSchemaViolation(
                f"bundle file {entry.file}: invalid {entry.kind}",
                violations=report.violations)
        _semantic_validate(entry.kind, document)

    # real pass: create missing items, author, finalize
    metas = kernel.store.manifest.get("roots", {})
    created: dict[str, str] = {}
    for entry in entries:
        path = f"/desc/{entry.name}"
        try:
            created[entry.name] = kernel.store.resolve_path(path)
        except ErrNotFound:
            meta = metas.get(entry.kind)
            if meta is None:
                raise ErrSchemaViolation(
                    f"no bootstrap root for kind {entry.kind}") from None
            created[entry.name] = kernel.descriptions.instantiate(
                meta, 1, entry.name, agent_id, under="/desc", internal=True)

    finalized: dict[str, VersionTag] = {}
    resolve = make_resolver(created, finalized)
    tags: list[VersionTag] = []
    for entry in ordered:
        document = _rewrite_refs(entry, resolve)
        uuid = created[entry.name]
        kernel.descriptions.author_description(uuid, agent_id, document)
        tag = kernel.descriptions.finalize_version(uuid, agent_id)
        finalized[entry.name] = tag
        tags.append(tag)
    return tags
