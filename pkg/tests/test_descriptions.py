import pytest

from itemforge.descriptions import parse_item_desc
from itemforge.errors import (
    ErrAccessDenied,
    ErrConstraint,
    ErrNoDraft,
    ErrNotFound,
    ErrSchemaViolation,
)
from itemforge.workflow import iter_paths, parse_workflow

from conftest import desc_of
from fixtures import measurement_doc


def activity_paths(document):
    return {p for p, _ in iter_paths(parse_workflow(document))}


def with_recalibrate(stored_workflow: str) -> str:
    """Stored v1 workflow plus a /Recalibrate activity before /Assemble."""
    from itemforge.workflow import Elementary, serialize_workflow
    root = parse_workflow(stored_workflow)
    idx = next(i for i, c in enumerate(root.children) if c.name == "Assemble")
    root.children.insert(idx, Elementary(name="Recalibrate", role="operator"))
    return serialize_workflow(root, name=root.name)


def without_activity(stored_workflow: str, name: str) -> str:
    from itemforge.workflow import serialize_workflow
    root = parse_workflow(stored_workflow)
    root.children = [c for c in root.children if c.name != name]
    return serialize_workflow(root, name=root.name)


@pytest.fixture
def v2_workflow(loaded):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    stored = loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "1").document
    return with_recalibrate(stored)


def test_author_updates_last_viewpoint(loaded, alice, v2_workflow):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    before = loaded.state(wf_desc).viewpoints[("WorkflowDesc", "last")].event_id
    loaded.descriptions.author_description(wf_desc, alice.agent_id, v2_workflow)
    after = loaded.state(wf_desc).viewpoints[("WorkflowDesc", "last")].event_id
    assert after > before


def test_author_requires_designer_role(loaded, bob, v2_workflow):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    with pytest.raises(ErrAccessDenied):
        loaded.descriptions.author_description(wf_desc, bob.agent_id, v2_workflow)


def test_author_rejects_xor_without_condition(loaded, alice):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    bad = """<WorkflowDesc name="x" routing="sequence">
      <Composite name="Check" routing="xor-split">
        <Elementary name="A" role="op"/><Elementary name="B" role="op"/>
      </Composite></WorkflowDesc>"""
    with pytest.raises(ErrSchemaViolation):
        loaded.descriptions.author_description(wf_desc, alice.agent_id, bad)


def test_two_authorings_last_moves_first_retrievable(loaded, alice, v2_workflow):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    stored_v1 = loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "1").document
    first = loaded.descriptions.author_description(
        wf_desc, alice.agent_id, v2_workflow)
    second = loaded.descriptions.author_description(
        wf_desc, alice.agent_id, stored_v1)
    last = loaded.state(wf_desc).viewpoints[("WorkflowDesc", "last")]
    assert last.event_id == second.event_id
    # the first draft is still in history, byte for byte
    assert loaded.store.read_outcome(wf_desc, first.event_id).document == v2_workflow


def test_finalize_assigns_versions_and_pins_bytes(loaded, alice, v2_workflow):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    v1_doc = loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "1").document
    loaded.descriptions.author_description(wf_desc, alice.agent_id, v2_workflow)
    tag = loaded.descriptions.finalize_version(wf_desc, alice.agent_id)
    assert tag.version == 2 and tag.view_name == "2"
    assert loaded.descriptions.versions_of(wf_desc) == [1, 2]
    # version 1 bytes unchanged
    assert loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "1").document == v1_doc
    assert loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "2").document == v2_workflow


def test_finalize_without_new_draft_is_err_no_draft(loaded, alice):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    with pytest.raises(ErrNoDraft):
        loaded.descriptions.finalize_version(wf_desc, alice.agent_id)


def test_instantiate_pins_description_version(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "PRT-1", alice.agent_id)
    assert loaded.get_property(item, "DescriptionVersion").value == "1"
    assert loaded.get_property(item, "DescriptionRef").value == product_desc
    assert not loaded.get_property(item, "DescriptionRef").mutable


def test_instantiate_unknown_version(loaded, product_desc, alice):
    with pytest.raises(ErrNotFound):
        loaded.descriptions.instantiate(product_desc, 9, "PRT-X", alice.agent_id)


def test_instantiate_validates_initial_properties(loaded, product_desc, alice):
    with pytest.raises(ErrSchemaViolation):
        loaded.descriptions.instantiate(product_desc, 1, "PRT-Y", alice.agent_id,
                                        initial_properties=[("NotDeclared", "x")])
    with pytest.raises(ErrSchemaViolation):
        loaded.descriptions.instantiate(product_desc, 1, "PRT-Z", alice.agent_id,
                                        initial_properties=[("Weight", "fuzzy")])
    item = loaded.descriptions.instantiate(product_desc, 1, "PRT-W", alice.agent_id,
                                           initial_properties=[("Weight", "3.5"),
                                                               ("Batch", "B7")])
    assert loaded.get_property(item, "Weight").value == "3.5"
    assert loaded.get_property(item, "Batch").value == "B7"


def make_v2(loaded, alice, v2_workflow):
    """Author+finalize ProductDesc v2 whose workflow adds /Recalibrate."""
    product_desc = desc_of(loaded, "ProductDesc")
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    loaded.descriptions.author_description(wf_desc, alice.agent_id, v2_workflow)
    loaded.descriptions.finalize_version(wf_desc, alice.agent_id)
    base = loaded.resolve_viewpoint(product_desc, "ItemDesc", "1").document
    bundle = parse_item_desc(base)
    bundle.workflow_version = 2
    from itemforge.descriptions import serialize_item_desc
    loaded.descriptions.author_description(product_desc, alice.agent_id,
                                           serialize_item_desc(bundle))
    return loaded.descriptions.finalize_version(product_desc, alice.agent_id)


def test_version_coexistence(loaded, alice, bob, v2_workflow):
    product_desc = desc_of(loaded, "ProductDesc")
    v1_bytes = loaded.resolve_viewpoint(product_desc, "ItemDesc", "1").document
    old = loaded.descriptions.instantiate(product_desc, 1, "OLD-1", alice.agent_id)
    # old item mid-lifecycle while v2 is finalized
    loaded.execute(old, bob.agent_id, "/Register", "Start")
    tag = make_v2(loaded, alice, v2_workflow)
    assert tag.version == 2
    new = loaded.descriptions.instantiate(product_desc, 2, "NEW-1", alice.agent_id)

    v1_wf = loaded.resolve_viewpoint(desc_of(loaded, "AssemblyWorkflow"),
                                     "WorkflowDesc", "1").document
    v2_wf = loaded.resolve_viewpoint(desc_of(loaded, "AssemblyWorkflow"),
                                     "WorkflowDesc", "2").document
    assert set(loaded.state(old).workflow.states) == activity_paths(v1_wf)
    assert set(loaded.state(new).workflow.states) == activity_paths(v2_wf)
    assert "/Recalibrate" in loaded.state(new).workflow.states
    assert "/Recalibrate" not in loaded.state(old).workflow.states
    # old item continues unaffected
    loaded.execute(old, bob.agent_id, "/Register", "Complete")
    loaded.execute(old, bob.agent_id, "/Measure", "Start")
    loaded.execute(old, bob.agent_id, "/Measure", "Complete",
                   outcome=measurement_doc(12.0))
    # v1 description bytes untouched by v2
    assert loaded.resolve_viewpoint(product_desc, "ItemDesc", "1").document == v1_bytes


def test_edit_instance_workflow_adds_job_after_measure(loaded, product_desc,
                                                       alice, bob, v2_workflow):
    item = loaded.descriptions.instantiate(product_desc, 1, "EDIT-1", alice.agent_id)
    loaded.execute(item, bob.agent_id, "/Register", "Start")
    loaded.execute(item, bob.agent_id, "/Register", "Complete")
    loaded.descriptions.edit_instance_workflow(item, alice.agent_id, v2_workflow)
    # surviving states preserved
    assert loaded.state(item).workflow.states["/Register"].state == "Complete"
    loaded.execute(item, bob.agent_id, "/Measure", "Start")
    loaded.execute(item, bob.agent_id, "/Measure", "Complete",
                   outcome=measurement_doc(11.0))
    jobs = {(j.activity_path, j.transition)
            for j in loaded.compute_jobs(item, bob.agent_id)}
    assert ("/Recalibrate", "Start") in jobs


def test_edit_requires_admin(loaded, product_desc, alice, bob, v2_workflow):
    item = loaded.descriptions.instantiate(product_desc, 1, "EDIT-2", alice.agent_id)
    with pytest.raises(ErrAccessDenied):
        loaded.descriptions.edit_instance_workflow(item, bob.agent_id, v2_workflow)


def test_edit_cannot_remove_completed_activity(loaded, product_desc, alice, bob):
    item = loaded.descriptions.instantiate(product_desc, 1, "EDIT-3", alice.agent_id)
    loaded.execute(item, bob.agent_id, "/Register", "Start")
    loaded.execute(item, bob.agent_id, "/Register", "Complete")
    stored = loaded.resolve_viewpoint(desc_of(loaded, "AssemblyWorkflow"),
                                      "WorkflowDesc", "1").document
    without_register = without_activity(stored, "Register")
    with pytest.raises(ErrConstraint):
        loaded.descriptions.edit_instance_workflow(item, alice.agent_id,
                                                   without_register)


def test_edit_then_replay_reflects_edit_at_correct_index(loaded, product_desc,
                                                         alice, bob, v2_workflow):
    item = loaded.descriptions.instantiate(product_desc, 1, "EDIT-4", alice.agent_id)
    loaded.execute(item, bob.agent_id, "/Register", "Start")
    loaded.execute(item, bob.agent_id, "/Register", "Complete")
    pre_edit = loaded.state(item).last_event_id
    event = loaded.descriptions.edit_instance_workflow(item, alice.agent_id,
                                                       v2_workflow)
    before = loaded.replay_item(item, up_to=pre_edit)
    assert "/Recalibrate" not in before.workflow.states
    after = loaded.replay_item(item, up_to=event.event_id)
    assert "/Recalibrate" in after.workflow.states
    assert loaded.replay_item(item).canonical_bytes() == loaded.state_bytes(item)


def test_promote_to_description(loaded, product_desc, alice, bob, v2_workflow):
    item = loaded.descriptions.instantiate(product_desc, 1, "PROM-1", alice.agent_id)
    loaded.descriptions.edit_instance_workflow(item, alice.agent_id, v2_workflow)
    tag = loaded.descriptions.promote_to_description(item, product_desc,
                                                     alice.agent_id)
    assert tag.version == 2
    promoted = loaded.resolve_viewpoint(product_desc, "ItemDesc", "2").document
    bundle = parse_item_desc(promoted)
    # the promoted bundle embeds the instance workflow byte-for-byte
    assert bundle.workflow_inline == v2_workflow
    # instantiating the promoted version includes the new activity
    child = loaded.descriptions.instantiate(product_desc, 2, "PROM-2",
                                            alice.agent_id)
    assert "/Recalibrate" in loaded.state(child).workflow.states


def test_promote_without_edit_fails(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "PROM-3", alice.agent_id)
    with pytest.raises(ErrNoDraft):
        loaded.descriptions.promote_to_description(item, product_desc,
                                                   alice.agent_id)


def test_promote_wrong_description_fails(loaded, checked_desc, product_desc, alice, v2_workflow):
    item = loaded.descriptions.instantiate(product_desc, 1, "PROM-4", alice.agent_id)
    loaded.descriptions.edit_instance_workflow(item, alice.agent_id, v2_workflow)
    with pytest.raises(ErrNotFound):
        loaded.descriptions.promote_to_description(item, checked_desc,
                                                   alice.agent_id)


def test_descriptions_are_items_with_full_history(loaded, alice, v2_workflow):
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    n = len(loaded.store.events(wf_desc))
    loaded.descriptions.author_description(wf_desc, alice.agent_id, v2_workflow)
    loaded.descriptions.finalize_version(wf_desc, alice.agent_id)
    events = loaded.store.events(wf_desc)
    assert len(events) > n
    paths = [e.activity_path for e in events[n:]]
    assert "/EditDefinition" in paths
    assert "/predefined/WriteViewpoint" in paths


def test_references_collection_points_at_referenced_descriptions(loaded):
    product_desc = desc_of(loaded, "ProductDesc")
    refs = {s.target for s in loaded.state(product_desc)
            .collections["References"].slots}
    assert desc_of(loaded, "AssemblyWorkflow") in refs
    assert desc_of(loaded, "MeasurementSchema") in refs
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    wf_refs = {s.target for s in loaded.state(wf_desc)
               .collections["References"].slots}
    assert desc_of(loaded, "MarkMeasured") in wf_refs


def test_meta_items_describe_themselves(loaded):
    meta_item_desc = loaded.store.resolve_path("/desc/meta/ItemDesc")
    state = loaded.state(meta_item_desc)
    assert state.properties["DescKind"].value == "ItemDesc"
    assert state.properties["DescriptionRef"].value == meta_item_desc
    # every meta root is a real item with events and a finalized version
    for kind in ("WorkflowDesc", "OutcomeDesc", "ScriptDesc"):
        meta = loaded.store.resolve_path(f"/desc/meta/{kind}")
        assert loaded.descriptions.versions_of(meta) == [1]
