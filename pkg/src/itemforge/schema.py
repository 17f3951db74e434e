"""XML Schema subset: compilation, write-time validation, and form models.

Supported subset: global element declarations, named complexType/simpleType,
sequence and choice compositors, attributes, minOccurs/maxOccurs, the simple
types {string, integer, decimal, boolean, date, dateTime}, enumeration and
pattern restrictions, and defaults. Named complex types may be recursive;
they are kept as lazy references in the compiled tree.

Everything else (imports, substitution groups, keys, mixed content, xs:any,
extension/restriction of complex content, ...) is rejected at compile time
with the construct named. Validation is exhaustive: the report lists every
violation, never just the first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime
from xml.etree import ElementTree as ET

from .errors import ErrMalformedXML, ErrUnsupportedConstruct

XSD_NS = "http://www.w3.org/2001/XMLSchema"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"

BUILTIN_TYPES = ("string", "integer", "decimal", "boolean", "date", "dateTime")

_INTEGER_RE = re.compile(r"[+-]?[0-9]+")
_DECIMAL_RE = re.compile(r"[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)")
_DATE_RE = re.compile(r"(\d{4})-(\d{2})-(\d{2})")
_DATETIME_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:\d{2})?"
)


def check_lexical(value_type: str, text: str) -> bool:
    """True when `text` is a valid lexical form of the builtin type."""
    if value_type == "string":
        return True
    text = text.strip()
    if value_type == "integer":
        return _INTEGER_RE.fullmatch(text) is not None
    if value_type == "decimal":
        return _DECIMAL_RE.fullmatch(text) is not None
    if value_type == "boolean":
        return text in ("true", "false", "1", "0")
    if value_type == "date":
        m = _DATE_RE.fullmatch(text)
        if not m:
            return False
        try:
            date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        except ValueError:
            return False
        return True
    if value_type == "dateTime":
        m = _DATETIME_RE.fullmatch(text)
        if not m:
            return False
        try:
            datetime(int(m.group(1)), int(m.group(2)), int(m.group(3)),
                     int(m.group(4)), int(m.group(5)), int(m.group(6)))
        except ValueError:
            return False
        return True
    return False


@dataclass
class FieldSpec:
    """One compiled element or attribute declaration."""

    name: str
    kind: str = "element"  # element | attribute
    value_type: str | None = None
    min_occurs: int = 1
    max_occurs: int | None = 1  # None = unbounded
    enumeration: list[str] | None = None
    pattern: str | None = None
    default: str | None = None
    children: list["FieldSpec"] = field(default_factory=list)
    composition: str = "none"  # sequence | choice | none
    # choice groups repeat as a unit
    group_min: int = 1
    group_max: int | None = 1
    # lazy reference to a named complex type (supports recursion)
    type_ref: str | None = None

    def element_children(self) -> list["FieldSpec"]:
        return [c for c in self.children if c.kind == "element"]

    def attribute_children(self) -> list["FieldSpec"]:
        return [c for c in self.children if c.kind == "attribute"]


@dataclass
class SchemaDoc:
    """A compiled schema: root element declarations plus named types."""

    schema_name: str
    version: int
    source: str
    roots: dict[str, FieldSpec]
    types: dict[str, FieldSpec]

    def root(self) -> FieldSpec:
        return next(iter(self.roots.values()))

    def resolve(self, spec: FieldSpec) -> FieldSpec:
        """Follow a named-type reference, keeping the element's own identity."""
        if spec.type_ref is None:
            return spec
        target = self.types[spec.type_ref]
        return FieldSpec(
            name=spec.name, kind=spec.kind, value_type=target.value_type,
            min_occurs=spec.min_occurs, max_occurs=spec.max_occurs,
            enumeration=target.enumeration, pattern=target.pattern,
            default=spec.default, children=target.children,
            composition=target.composition, group_min=target.group_min,
            group_max=target.group_max,
        )


@dataclass
class ValidationReport:
    valid: bool
    violations: list[tuple[str, str, str]]  # (document-path, rule, message)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _is_xsd(elem: ET.Element, name: str) -> bool:
    return elem.tag == f"{{{XSD_NS}}}{name}" or elem.tag == name


_REJECTED = (
    "import", "include", "redefine", "key", "keyref", "unique", "any",
    "anyAttribute", "group", "attributeGroup", "all", "union", "list",
    "complexContent", "simpleContent", "notation",
)


class _Compiler:
    def __init__(self, root: ET.Element, source: str):
        self.root = root
        self.source = source
        self.types: dict[str, FieldSpec] = {}
        self.simple_types: dict[str, tuple[str, list[str] | None, str | None]] = {}

    def reject(self, construct: str, location: str):
        raise ErrUnsupportedConstruct(f"unsupported construct '{construct}' at {location}")

    def compile(self) -> tuple[dict[str, FieldSpec], dict[str, FieldSpec]]:
        if _local(self.root.tag) != "schema":
            raise ErrUnsupportedConstruct("root element is not an XML Schema document")
        roots: dict[str, FieldSpec] = {}
        # first pass: named simple types (elements may reference them)
        for child in self.root:
            if _is_xsd(child, "simpleType"):
                name = child.get("name")
                if not name:
                    self.reject("anonymous top-level simpleType", "/schema")
                self.simple_types[name] = self._simple_type(child, f"/schema/simpleType[{name}]")
        for child in self.root:
            if _is_xsd(child, "complexType"):
                name = child.get("name")
                if not name:
                    self.reject("anonymous top-level complexType", "/schema")
                self.types[name] = self._complex_type(child, f"type {name}", name=name)
        for child in self.root:
            tag = _local(child.tag)
            if _is_xsd(child, "element"):
                spec = self._element(child, "/schema")
                roots[spec.name] = spec
            elif _is_xsd(child, "annotation") or tag in ("complexType", "simpleType"):
                continue
            elif tag in _REJECTED:
                self.reject(tag, "/schema")
            else:
                self.reject(tag, "/schema")
        if not roots:
            raise ErrUnsupportedConstruct("schema declares no global element")
        return roots, self.types

    def _occurs(self, elem: ET.Element) -> tuple[int, int | None]:
        mn = int(elem.get("minOccurs", "1"))
        mx_raw = elem.get("maxOccurs", "1")
        mx = None if mx_raw == "unbounded" else int(mx_raw)
        return mn, mx

    def _builtin(self, type_attr: str, location: str) -> str | None:
        name = type_attr.split(":")[-1]
        if name in BUILTIN_TYPES:
            return name
        return None

    def _element(self, elem: ET.Element, location: str) -> FieldSpec:
        name = elem.get("name")
        if name is None:
            self.reject("element without name (ref?)", location)
        if elem.get("substitutionGroup"):
            self.reject("substitutionGroup", f"{location}/{name}")
        here = f"{location}/{name}"
        mn, mx = self._occurs(elem)
        spec = FieldSpec(name=name, kind="element", min_occurs=mn, max_occurs=mx,
                         default=elem.get("default"))
        type_attr = elem.get("type")
        inline = [c for c in elem if _local(c.tag) in ("complexType", "simpleType")]
        if type_attr:
            builtin = self._builtin(type_attr, here)
            if builtin:
                spec.value_type = builtin
            elif type_attr in self.simple_types:
                base, enum, pattern = self.simple_types[type_attr]
                spec.value_type, spec.enumeration, spec.pattern = base, enum, pattern
            elif type_attr in self.types or self._declared_later(type_attr):
                spec.type_ref = type_attr
            else:
                self.reject(f"unknown type '{type_attr}'", here)
        elif inline:
            child = inline[0]
            if _local(child.tag) == "simpleType":
                base, enum, pattern = self._simple_type(child, here)
                spec.value_type, spec.enumeration, spec.pattern = base, enum, pattern
            else:
                tmpl = self._complex_type(child, here)
                spec.children = tmpl.children
                spec.composition = tmpl.composition
                spec.group_min, spec.group_max = tmpl.group_min, tmpl.group_max
        else:
            spec.value_type = "string"
        if spec.default is not None and spec.value_type is not None:
            if not check_lexical(spec.value_type, spec.default):
                raise ErrUnsupportedConstruct(
                    f"default '{spec.default}' is not a valid {spec.value_type} at {here}")
        return spec

    def _declared_later(self, type_name: str) -> bool:
        for child in self.root:
            if _is_xsd(child, "complexType") and child.get("name") == type_name:
                return True
        return False

    def _complex_type(self, elem: ET.Element, location: str, name: str | None = None) -> FieldSpec:
        if elem.get("mixed") == "true":
            self.reject("mixed content", location)
        spec = FieldSpec(name=name or "", kind="element", value_type=None)
        for child in elem:
            tag = _local(child.tag)
            if tag == "sequence":
                spec.composition = "sequence"
                gmn, gmx = self._occurs(child)
                if (gmn, gmx) != (1, 1):
                    self.reject("minOccurs/maxOccurs on sequence", location)
                for sub in child:
                    stag = _local(sub.tag)
                    if stag == "element":
                        spec.children.append(self._element(sub, location))
                    elif stag == "annotation":
                        continue
                    else:
                        self.reject(f"{stag} inside sequence", location)
            elif tag == "choice":
                spec.composition = "choice"
                spec.group_min, spec.group_max = self._occurs(child)
                for sub in child:
                    stag = _local(sub.tag)
                    if stag == "element":
                        alt = self._element(sub, location)
                        if (alt.min_occurs, alt.max_occurs) != (1, 1):
                            self.reject("occurs on choice alternative", location)
                        spec.children.append(alt)
                    elif stag == "annotation":
                        continue
                    else:
                        self.reject(f"{stag} inside choice", location)
                if len(spec.element_children()) < 2:
                    self.reject("choice with fewer than 2 alternatives", location)
            elif tag == "attribute":
                spec.children.append(self._attribute(child, location))
            elif tag == "annotation":
                continue
            else:
                self.reject(tag, location)
        return spec

    def _attribute(self, elem: ET.Element, location: str) -> FieldSpec:
        name = elem.get("name")
        if name is None:
            self.reject("attribute without name (ref?)", location)
        here = f"{location}/@{name}"
        use = elem.get("use", "optional")
        if use == "prohibited":
            self.reject("use='prohibited'", here)
        spec = FieldSpec(name=name, kind="attribute", value_type="string",
                         min_occurs=1 if use == "required" else 0, max_occurs=1,
                         default=elem.get("default"))
        type_attr = elem.get("type")
        inline = [c for c in elem if _local(c.tag) == "simpleType"]
        if type_attr:
            builtin = self._builtin(type_attr, here)
            if builtin:
                spec.value_type = builtin
            elif type_attr in self.simple_types:
                base, enum, pattern = self.simple_types[type_attr]
                spec.value_type, spec.enumeration, spec.pattern = base, enum, pattern
            else:
                self.reject(f"unknown attribute type '{type_attr}'", here)
        elif inline:
            base, enum, pattern = self._simple_type(inline[0], here)
            spec.value_type, spec.enumeration, spec.pattern = base, enum, pattern
        return spec

    def _simple_type(self, elem: ET.Element, location: str) -> tuple[str, list[str] | None, str | None]:
        restriction = None
        for child in elem:
            tag = _local(child.tag)
            if tag == "restriction":
                restriction = child
            elif tag == "annotation":
                continue
            else:
                self.reject(tag, location)
        if restriction is None:
            self.reject("simpleType without restriction", location)
        base = self._builtin(restriction.get("base", ""), location)
        if base is None:
            self.reject(f"restriction base '{restriction.get('base')}'", location)
        enum: list[str] = []
        pattern = None
        for facet in restriction:
            tag = _local(facet.tag)
            if tag == "enumeration":
                enum.append(facet.get("value", ""))
            elif tag == "pattern":
                pattern = facet.get("value")
                try:
                    re.compile(pattern)
                except re.error:
                    self.reject(f"unsupported pattern '{pattern}'", location)
            elif tag == "annotation":
                continue
            else:
                self.reject(f"facet {tag}", location)
        return base, (enum or None), pattern


def compile_schema(source: str, schema_name: str | None = None, version: int = 0) -> SchemaDoc:
    """Compile XML Schema text into a SchemaDoc, rejecting anything outside the subset."""
    try:
        root = ET.fromstring(source)
    except ET.ParseError as exc:
        raise ErrMalformedXML(f"schema source is not well-formed XML: {exc}") from exc
    compiler = _Compiler(root, source)
    roots, types = compiler.compile()
    name = schema_name or next(iter(roots))
    return SchemaDoc(schema_name=name, version=version, source=source, roots=roots, types=types)


class _Validator:
    def __init__(self, schema: SchemaDoc):
        self.schema = schema
        self.violations: list[tuple[str, str, str]] = []

    def report(self, path: str, rule: str, message: str):
        self.violations.append((path, rule, message))

    def check_value(self, spec: FieldSpec, text: str, path: str):
        value = text if text is not None else ""
        if value.strip() == "" and spec.default is not None:
            return
        if not check_lexical(spec.value_type or "string", value):
            self.report(path, "type-mismatch",
                        f"'{value.strip()}' is not a valid {spec.value_type}")
            return
        key = value if spec.value_type == "string" else value.strip()
        if spec.enumeration is not None and key not in spec.enumeration:
            self.report(path, "enum-miss",
                        f"'{key}' not in {{{', '.join(spec.enumeration)}}}")
        if spec.pattern is not None and re.fullmatch(spec.pattern, key) is None:
            self.report(path, "pattern-miss", f"'{key}' does not match {spec.pattern}")

    def walk(self, elem: ET.Element, spec: FieldSpec, path: str):
        spec = self.schema.resolve(spec)
        declared_attrs = {a.name: a for a in spec.attribute_children()}
        for attr_name, attr_value in elem.attrib.items():
            if attr_name.startswith(f"{{{XSI_NS}}}"):
                self.report(f"{path}/@{_local(attr_name)}", "unexpected-attribute",
                            "xsi attributes are not supported")
                continue
            decl = declared_attrs.get(_local(attr_name))
            if decl is None:
                self.report(f"{path}/@{_local(attr_name)}", "unexpected-attribute",
                            "attribute not declared")
            else:
                self.check_value(decl, attr_value, f"{path}/@{_local(attr_name)}")
        for attr in spec.attribute_children():
            if attr.min_occurs > 0 and attr.name not in elem.attrib:
                self.report(f"{path}/@{attr.name}", "missing-required",
                            "required attribute absent")

        children = list(elem)
        if spec.value_type is not None:
            for child in children:
                self.report(f"{path}/{_local(child.tag)}", "unexpected-element",
                            "no child elements allowed here")
            self.check_value(spec, elem.text or "", path)
            return
        if spec.composition == "none":
            for child in children:
                self.report(f"{path}/{_local(child.tag)}", "unexpected-element",
                            "element must be empty")
            return
        if spec.composition == "sequence":
            self._walk_sequence(children, spec, path)
        else:
            self._walk_choice(children, spec, path)

    def _child_path(self, path: str, name: str, index: int, total: int) -> str:
        if total > 1:
            return f"{path}/{name}[{index}]"
        return f"{path}/{name}"

    def _walk_sequence(self, children: list[ET.Element], spec: FieldSpec, path: str):
        pos = 0
        for decl in spec.element_children():
            matched: list[ET.Element] = []
            while pos < len(children) and _local(children[pos].tag) == decl.name:
                matched.append(children[pos])
                pos += 1
            if len(matched) < decl.min_occurs:
                self.report(f"{path}/{decl.name}", "missing-required",
                            f"expected at least {decl.min_occurs}, found {len(matched)}")
            if decl.max_occurs is not None and len(matched) > decl.max_occurs:
                self.report(f"{path}/{decl.name}", "occurs-exceeded",
                            f"expected at most {decl.max_occurs}, found {len(matched)}")
            for i, child in enumerate(matched, start=1):
                self.walk(child, decl, self._child_path(path, decl.name, i, len(matched)))
        for child in children[pos:]:
            self.report(f"{path}/{_local(child.tag)}", "unexpected-element",
                        "element not expected here")

    def _walk_choice(self, children: list[ET.Element], spec: FieldSpec, path: str):
        alts = {c.name: c for c in spec.element_children()}
        picks = 0
        seen: dict[str, int] = {}
        counts: dict[str, int] = {}
        for child in children:
            counts[_local(child.tag)] = counts.get(_local(child.tag), 0) + 1
        for child in children:
            name = _local(child.tag)
            decl = alts.get(name)
            if decl is None:
                self.report(f"{path}/{name}", "unexpected-element",
                            "element is not one of the allowed alternatives")
                continue
            picks += 1
            seen[name] = seen.get(name, 0) + 1
            self.walk(child, decl, self._child_path(path, name, seen[name], counts[name]))
        if picks < spec.group_min:
            self.report(path, "missing-required",
                        f"expected at least {spec.group_min} of "
                        f"{{{', '.join(alts)}}}, found {picks}")
        if spec.group_max is not None and picks > spec.group_max:
            self.report(path, "occurs-exceeded",
                        f"expected at most {spec.group_max} choice members, found {picks}")


def validate(doc: str, schema: SchemaDoc) -> ValidationReport:
    """Validate a document against a compiled schema. Total: never raises."""
    validator = _Validator(schema)
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as exc:
        validator.report("/", "malformed-xml", str(exc))
        return ValidationReport(valid=False, violations=validator.violations)
    name = _local(root.tag)
    spec = schema.roots.get(name)
    if spec is None:
        validator.report(f"/{name}", "unexpected-root",
                         f"expected one of {{{', '.join(schema.roots)}}}")
        return ValidationReport(valid=False, violations=validator.violations)
    validator.walk(root, spec, f"/{name}")
    return ValidationReport(valid=not validator.violations, violations=validator.violations)


_INPUT_KINDS = {
    "string": "text", "integer": "integer", "decimal": "decimal",
    "boolean": "boolean", "date": "date", "dateTime": "datetime",
}


def form_model(schema: SchemaDoc) -> list[dict]:
    """Flatten a compiled schema into data-entry form fields, document order.

    Leaf fields become inputs; repeated or nested containers become groups
    holding their own field lists. Enumerations render as selections.
    """
    seen_types: set[str] = set()

    def leaf(spec: FieldSpec, path: str) -> dict:
        entry: dict = {
            "kind": "field",
            "label": spec.name,
            "path": path,
            "input": "select" if spec.enumeration else _INPUT_KINDS[spec.value_type or "string"],
            "required": spec.min_occurs > 0,
        }
        if spec.enumeration:
            entry["options"] = list(spec.enumeration)
            entry["value_type"] = spec.value_type
        if spec.pattern:
            entry["pattern"] = spec.pattern
        if spec.default is not None:
            entry["default"] = spec.default
        if spec.kind == "element" and (spec.max_occurs is None or spec.max_occurs > 1):
            entry["repeatable"] = True
            entry["min_occurs"] = spec.min_occurs
            entry["max_occurs"] = spec.max_occurs
        return entry

    def walk(spec: FieldSpec, path: str) -> list[dict]:
        ref = spec.type_ref
        if ref is not None:
            if ref in seen_types:
                return [{"kind": "group", "label": spec.name, "path": path,
                         "recursive": True, "fields": []}]
            seen_types.add(ref)
        spec = schema.resolve(spec)
        entries: list[dict] = []
        for attr in spec.attribute_children():
            entries.append(leaf(attr, f"{path}/@{attr.name}"))
        if spec.value_type is not None:
            entries.append(leaf(spec, path))
            return entries
        inner: list[dict] = list(entries)
        for child in spec.element_children():
            child_path = f"{path}/{child.name}"
            resolved = schema.resolve(child)
            if resolved.value_type is not None and not resolved.attribute_children():
                inner.append(leaf(child, child_path))
            else:
                repeated = child.max_occurs is None or child.max_occurs > 1
                fields = walk(child, child_path)
                if repeated:
                    inner.append({
                        "kind": "group", "label": child.name, "path": child_path,
                        "repeatable": True, "min_occurs": child.min_occurs,
                        "max_occurs": child.max_occurs, "fields": fields,
                    })
                else:
                    inner.extend(fields)
        if ref is not None:
            seen_types.discard(ref)
        return inner

    root = schema.root()
    fields = walk(root, f"/{root.name}")
    return fields
