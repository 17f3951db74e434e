"""Shared fixture documents: schemas, scripts, workflows, bundles."""

from xml.sax.saxutils import escape

MEASUREMENT_XSD = """<xs:schema xmlns:xs="http://www.w3.org/2001/XMLSchema">
  <xs:element name="Measurement">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="weight" type="xs:decimal"/>
        <xs:element name="length" type="xs:decimal"/>
        <xs:element name="operatorNote" type="xs:string" minOccurs="0"/>
      </xs:sequence>
      <xs:attribute name="grade" use="required">
        <xs:simpleType>
          <xs:restriction base="xs:string">
            <xs:enumeration value="PASS"/>
            <xs:enumeration value="FAIL"/>
          </xs:restriction>
        </xs:simpleType>
      </xs:attribute>
    </xs:complexType>
  </xs:element>
</xs:schema>"""

ASSEMBLY_XSD = """<xs:schema xmlns:xs="http://www.w3.org/2001/XMLSchema">
  <xs:element name="Assembly">
    <xs:complexType>
      <xs:sequence>
        <xs:element name="position" type="xs:integer"/>
        <xs:element name="mountedAt" type="xs:dateTime" minOccurs="0"/>
        <xs:element name="fastener" minOccurs="0" maxOccurs="4">
          <xs:complexType>
            <xs:attribute name="torque" type="xs:decimal" use="required"/>
          </xs:complexType>
        </xs:element>
      </xs:sequence>
    </xs:complexType>
  </xs:element>
</xs:schema>"""


def outcome_desc(schema_name: str, xsd: str) -> str:
    return (f'<OutcomeDesc schemaName="{schema_name}">'
            f'<Definition>{escape(xsd)}</Definition></OutcomeDesc>')


PASSFAIL_SCRIPT = """<ScriptDesc name="PassFail" language="minipy" output="route">
  <Input name="weight" type="decimal"/>
  <Body>
if weight &gt; 10:
    return "PassPath"
return "FailPath"
  </Body>
</ScriptDesc>"""

MARK_MEASURED_SCRIPT = """<ScriptDesc name="MarkMeasured" language="minipy" output="any">
  <Input name="grade" type="string"/>
  <Body>
write_property("Status", "MEASURED-" + grade)
  </Body>
</ScriptDesc>"""

# linear workflow used by the desk-scale scenario
LINEAR_WORKFLOW = """<WorkflowDesc name="Assembly" routing="sequence">
  <Elementary name="Register" role="operator"/>
  <Elementary name="Measure" role="operator" schema="Measurement" schemaVersion="1">
    <Consequence script="MarkMeasured" version="1"/>
  </Elementary>
  <Elementary name="Assemble" role="operator" schema="Assembly" schemaVersion="1"/>
</WorkflowDesc>"""

# richer workflow exercising xor routing
CHECKED_WORKFLOW = """<WorkflowDesc name="CheckedAssembly" routing="sequence">
  <Elementary name="Register" role="operator"/>
  <Elementary name="Measure" role="operator" schema="Measurement" schemaVersion="1">
    <Consequence script="MarkMeasured" version="1"/>
  </Elementary>
  <Composite name="Check" routing="xor-split">
    <Condition script="PassFail" version="1"/>
    <Elementary name="PassPath" role="operator"/>
    <Elementary name="FailPath" role="operator"/>
  </Composite>
  <Elementary name="Assemble" role="operator"/>
</WorkflowDesc>"""

PRODUCT_ITEM_DESC = """<ItemDesc>
  <Workflow ref="AssemblyWorkflow" version="1"/>
  <Properties>
    <PropertyDef name="Status" type="string" default="NEW"/>
    <PropertyDef name="Weight" type="decimal" mutable="true" default="0.0"/>
    <PropertyDef name="Batch" type="string" default="B0"/>
  </Properties>
  <Outcomes>
    <OutcomeRef schema="Measurement" ref="MeasurementSchema" version="1"/>
    <OutcomeRef schema="Assembly" ref="AssemblySchema" version="1"/>
  </Outcomes>
  <Collections>
    <CollectionDef name="SubParts" kind="aggregation" slots="10"/>
    <CollectionDef name="RelatedTo" kind="dependency"/>
  </Collections>
</ItemDesc>"""

CHECKED_ITEM_DESC = """<ItemDesc>
  <Workflow ref="CheckedWorkflow" version="1"/>
  <Properties>
    <PropertyDef name="Status" type="string" default="NEW"/>
  </Properties>
  <Outcomes>
    <OutcomeRef schema="Measurement" ref="MeasurementSchema" version="1"/>
  </Outcomes>
</ItemDesc>"""


def fixture_bundle_entries() -> list[tuple[str, str, str]]:
    """The standard test bundle: 2 schemas, 2 scripts, 2 workflows, 2 item descs."""
    return [
        ("MeasurementSchema", "OutcomeDesc", outcome_desc("Measurement", MEASUREMENT_XSD)),
        ("AssemblySchema", "OutcomeDesc", outcome_desc("Assembly", ASSEMBLY_XSD)),
        ("PassFail", "ScriptDesc", PASSFAIL_SCRIPT),
        ("MarkMeasured", "ScriptDesc", MARK_MEASURED_SCRIPT),
        ("AssemblyWorkflow", "WorkflowDesc", LINEAR_WORKFLOW),
        ("CheckedWorkflow", "WorkflowDesc", CHECKED_WORKFLOW),
        ("ProductDesc", "ItemDesc", PRODUCT_ITEM_DESC),
        ("CheckedProductDesc", "ItemDesc", CHECKED_ITEM_DESC),
    ]


def measurement_doc(weight: float, length: float = 230.0, grade: str = "PASS",
                    note: str | None = None) -> str:
    note_xml = f"<operatorNote>{escape(note)}</operatorNote>" if note else ""
    return (f'<Measurement grade="{grade}"><weight>{weight}</weight>'
            f"<length>{length}</length>{note_xml}</Measurement>")


def assembly_doc(position: int, torques: list[float] | None = None) -> str:
    fasteners = "".join(f'<fastener torque="{t}"/>' for t in (torques or []))
    return f"<Assembly><position>{position}</position>{fasteners}</Assembly>"
