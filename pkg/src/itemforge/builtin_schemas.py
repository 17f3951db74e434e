"""Built-in outcome schemas: predefined-step payloads and description meta-schemas.

These ship with the kernel at version 1. User schemas (from OutcomeDesc
items) are registered alongside them at description finalization, and
every outcome pin is (schema-name, version), so later evolution never
invalidates stored documents.
"""

from __future__ import annotations

import threading

from .errors import ErrConstraint, ErrNotFound
from .schema import SchemaDoc, compile_schema

_XS = 'xmlns:xs="http://www.w3.org/2001/XMLSchema"'

WRITE_PROPERTY_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="PropType">
    <xs:restriction base="xs:string">
      <xs:enumeration value="string"/>
      <xs:enumeration value="integer"/>
      <xs:enumeration value="decimal"/>
      <xs:enumeration value="boolean"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:element name="WriteProperty">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Value" type="xs:string"/>
      </xs:sequence>
      <xs:attribute name="name" type="xs:string" use="required"/>
      <xs:attribute name="type" type="PropType"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

ADD_MEMBER_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="AddMemberToCollection">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Target" type="xs:string"/>
        <xs:element name="SlotProperty" minOccurs="0" maxOccurs="unbounded">
          <xs:complexType>
            <xs:attribute name="name" type="xs:string" use="required"/>
            <xs:attribute name="value" type="xs:string" use="required"/>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
      <xs:attribute name="collection" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

REMOVE_MEMBER_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="RemoveMemberFromCollection">
    <xs:complexType>
      <xs:attribute name="collection" type="xs:string" use="required"/>
      <xs:attribute name="slotId" type="xs:integer" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

ASSIGN_SLOT_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="AssignSlot">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Target" type="xs:string"/>
      </xs:sequence>
      <xs:attribute name="collection" type="xs:string" use="required"/>
      <xs:attribute name="slotId" type="xs:integer" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

CREATE_ITEM_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="CreateItem">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Description" type="xs:string" minOccurs="0"/>
        <xs:element name="InlineBundle" type="xs:string" minOccurs="0"/>
        <xs:element name="InitialProperty" minOccurs="0" maxOccurs="unbounded">
          <xs:complexType>
            <xs:attribute name="name" type="xs:string" use="required"/>
            <xs:attribute name="value" type="xs:string" use="required"/>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
      <xs:attribute name="name" type="xs:string" use="required"/>
      <xs:attribute name="under" type="xs:string" use="required"/>
      <xs:attribute name="version" type="xs:integer"/>
      <xs:attribute name="uuid" type="xs:string"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

ADD_DOMAIN_PATH_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="AddDomainPath">
    <xs:complexType>
      <xs:attribute name="path" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

REMOVE_DOMAIN_PATH_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="RemoveDomainPath">
    <xs:complexType>
      <xs:attribute name="path" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

WRITE_VIEWPOINT_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="WriteViewpoint">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Document" type="xs:string" minOccurs="0"/>
      </xs:sequence>
      <xs:attribute name="schema" type="xs:string" use="required"/>
      <xs:attribute name="view" type="xs:string" use="required"/>
      <xs:attribute name="eventId" type="xs:integer"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

SCRIPT_ERROR_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="ScriptError">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Message" type="xs:string"/>
      </xs:sequence>
      <xs:attribute name="script" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

WORKFLOW_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="RoutingType">
    <xs:restriction base="xs:string">
      <xs:enumeration value="sequence"/>
      <xs:enumeration value="and-split"/>
      <xs:enumeration value="xor-split"/>
      <xs:enumeration value="loop"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:complexType name="ScriptHookType">
    <xs:sequence>
      <xs:element name="Code" type="xs:string" minOccurs="0"/>
    </xs:sequence>
    <xs:attribute name="script" type="xs:string"/>
    <xs:attribute name="version" type="xs:integer"/>
    <xs:attribute name="language" type="xs:string"/>
  </xs:complexType>
  <xs:complexType name="ElementaryType">
    <xs:sequence>
      <xs:element name="Consequence" type="ScriptHookType" minOccurs="0"/>
    </xs:sequence>
    <xs:attribute name="name" type="xs:string" use="required"/>
    <xs:attribute name="role" type="xs:string" use="required"/>
    <xs:attribute name="schema" type="xs:string"/>
    <xs:attribute name="schemaVersion" type="xs:integer"/>
  </xs:complexType>
  <xs:complexType name="CompositeType">
    <xs:choice minOccurs="0" maxOccurs="unbounded">
      <xs:element name="Condition" type="ScriptHookType"/>
      <xs:element name="Elementary" type="ElementaryType"/>
      <xs:element name="Composite" type="CompositeType"/>
    </xs:choice>
    <xs:attribute name="name" type="xs:string" use="required"/>
    <xs:attribute name="routing" type="RoutingType" use="required"/>
  </xs:complexType>
  <xs:element name="WorkflowDesc">
    <xs:complexType>
      <xs:choice minOccurs="0" maxOccurs="unbounded">
        <xs:element name="Condition" type="ScriptHookType"/>
        <xs:element name="Elementary" type="ElementaryType"/>
        <xs:element name="Composite" type="CompositeType"/>
      </xs:choice>
      <xs:attribute name="name" type="xs:string"/>
      <xs:attribute name="routing" type="RoutingType"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

SCRIPT_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="ValueType">
    <xs:restriction base="xs:string">
      <xs:enumeration value="string"/>
      <xs:enumeration value="integer"/>
      <xs:enumeration value="decimal"/>
      <xs:enumeration value="boolean"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:element name="ScriptDesc">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Input" minOccurs="0" maxOccurs="unbounded">
          <xs:complexType>
            <xs:attribute name="name" type="xs:string" use="required"/>
            <xs:attribute name="type" type="ValueType" use="required"/>
          </xs:complexType>
        </xs:element>
        <xs:element name="Body" type="xs:string"/>
      </xs:sequence>
      <xs:attribute name="name" type="xs:string" use="required"/>
      <xs:attribute name="language" type="xs:string" use="required"/>
      <xs:attribute name="output" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

OUTCOME_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:element name="OutcomeDesc">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Definition" type="xs:string"/>
      </xs:sequence>
      <xs:attribute name="schemaName" type="xs:string" use="required"/>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

PROPERTY_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="PropType">
    <xs:restriction base="xs:string">
      <xs:enumeration value="string"/>
      <xs:enumeration value="integer"/>
      <xs:enumeration value="decimal"/>
      <xs:enumeration value="boolean"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:element name="PropertyDesc">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="PropertyDef" minOccurs="0" maxOccurs="unbounded">
          <xs:complexType>
            <xs:attribute name="name" type="xs:string" use="required"/>
            <xs:attribute name="type" type="PropType" use="required"/>
            <xs:attribute name="mutable" type="xs:boolean"/>
            <xs:attribute name="default" type="xs:string"/>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

COLLECTION_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="CollectionKind">
    <xs:restriction base="xs:string">
      <xs:enumeration value="dependency"/>
      <xs:enumeration value="aggregation"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:element name="CollectionDesc">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="CollectionDef" minOccurs="0" maxOccurs="unbounded">
          <xs:complexType>
            <xs:attribute name="name" type="xs:string" use="required"/>
            <xs:attribute name="kind" type="CollectionKind" use="required"/>
            <xs:attribute name="slots" type="xs:integer"/>
            <xs:attribute name="memberItem" type="xs:string"/>
            <xs:attribute name="memberVersion" type="xs:integer"/>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

ITEM_DESC_XSD = f"""
<xs:schema {_XS}>
  <xs:simpleType name="PropType">
    <xs:restriction base="xs:string">
      <xs:enumeration value="string"/>
      <xs:enumeration value="integer"/>
      <xs:enumeration value="decimal"/>
      <xs:enumeration value="boolean"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:simpleType name="CollectionKind">
    <xs:restriction base="xs:string">
      <xs:enumeration value="dependency"/>
      <xs:enumeration value="aggregation"/>
    </xs:restriction>
  </xs:simpleType>
  <xs:element name="ItemDesc">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="Workflow">
          <xs:complexType>
            <xs:sequence>
              <xs:element name="Inline" type="xs:string" minOccurs="0"/>
            </xs:sequence>
            <xs:attribute name="item" type="xs:string"/>
            <xs:attribute name="version" type="xs:integer"/>
          </xs:complexType>
        </xs:element>
        <xs:element name="Properties" minOccurs="0">
          <xs:complexType>
            <xs:sequence>
              <xs:element name="PropertyDef" minOccurs="0" maxOccurs="unbounded">
                <xs:complexType>
                  <xs:attribute name="name" type="xs:string" use="required"/>
                  <xs:attribute name="type" type="PropType" use="required"/>
                  <xs:attribute name="mutable" type="xs:boolean"/>
                  <xs:attribute name="default" type="xs:string"/>
                </xs:complexType>
              </xs:element>
            </xs:sequence>
          </xs:complexType>
        </xs:element>
        <xs:element name="Outcomes" minOccurs="0">
          <xs:complexType>
            <xs:sequence>
              <xs:element name="OutcomeRef" minOccurs="0" maxOccurs="unbounded">
                <xs:complexType>
                  <xs:attribute name="schema" type="xs:string" use="required"/>
                  <xs:attribute name="item" type="xs:string"/>
                  <xs:attribute name="version" type="xs:integer" use="required"/>
                </xs:complexType>
              </xs:element>
            </xs:sequence>
          </xs:complexType>
        </xs:element>
        <xs:element name="Collections" minOccurs="0">
          <xs:complexType>
            <xs:sequence>
              <xs:element name="CollectionDef" minOccurs="0" maxOccurs="unbounded">
                <xs:complexType>
                  <xs:attribute name="name" type="xs:string" use="required"/>
                  <xs:attribute name="kind" type="CollectionKind" use="required"/>
                  <xs:attribute name="slots" type="xs:integer"/>
                  <xs:attribute name="memberItem" type="xs:string"/>
                  <xs:attribute name="memberVersion" type="xs:integer"/>
                </xs:complexType>
              </xs:element>
            </xs:sequence>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
    </xs:complexType>
  </xs:element>
</xs:schema>
"""

BUILTIN_SOURCES: dict[str, str] = {
    "WriteProperty": WRITE_PROPERTY_XSD,
    "AddMemberToCollection": ADD_MEMBER_XSD,
    "RemoveMemberFromCollection": REMOVE_MEMBER_XSD,
    "AssignSlot": ASSIGN_SLOT_XSD,
    "CreateItem": CREATE_ITEM_XSD,
    "AddDomainPath": ADD_DOMAIN_PATH_XSD,
    "RemoveDomainPath": REMOVE_DOMAIN_PATH_XSD,
    "WriteViewpoint": WRITE_VIEWPOINT_XSD,
    "ScriptError": SCRIPT_ERROR_XSD,
    "WorkflowDesc": WORKFLOW_DESC_XSD,
    "ScriptDesc": SCRIPT_DESC_XSD,
    "OutcomeDesc": OUTCOME_DESC_XSD,
    "PropertyDesc": PROPERTY_DESC_XSD,
    "CollectionDesc": COLLECTION_DESC_XSD,
    "ItemDesc": ITEM_DESC_XSD,
}


class SchemaRegistry:
    """All compiled schemas by (name, version); built-ins pinned at version 1.

    User schemas arrive when an OutcomeDesc item finalizes a version; the
    name stays bound to that item forever so two descriptions can never
    fight over one schema name.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._schemas: dict[tuple[str, int], SchemaDoc] = {}
        self._owners: dict[str, str] = {}  # schema-name -> OutcomeDesc item uuid
        for name, source in BUILTIN_SOURCES.items():
            self._schemas[(name, 1)] = compile_schema(source, schema_name=name, version=1)
            self._owners[name] = "builtin"

    def get(self, name: str, version: int) -> SchemaDoc:
        with self._lock:
            doc = self._schemas.get((name, version))
        if doc is None:
            raise ErrNotFound(f"no schema ({name}, v{version})")
        return doc

    def has(self, name: str, version: int) -> bool:
        with self._lock:
            return (name, version) in self._schemas

    def owner(self, name: str) -> str | None:
        with self._lock:
            return self._owners.get(name)

    def check_claim(self, name: str, owner: str):
        with self._lock:
            bound = self._owners.get(name)
        if bound is not None and bound != owner:
            raise ErrConstraint(
                f"schema name '{name}' is already provided by {bound}")

    def register(self, name: str, version: int, source: str, owner: str):
        self.check_claim(name, owner)
        doc = compile_schema(source, schema_name=name, version=version)
        with self._lock:
            self._schemas[(name, version)] = doc
            self._owners[name] = owner

    def versions(self, name: str) -> list[int]:
        with self._lock:
            return sorted(v for (n, v) in self._schemas if n == name)
