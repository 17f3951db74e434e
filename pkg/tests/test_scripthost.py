"""Script-host integration: resolution, pinning, depth safety, user-code agents."""

import threading
import time

import pytest

from itemforge.bundle import import_bundle, make_bundle
from itemforge.errors import ErrInvalidTransition, ErrNotFound, ErrScriptFailure
from itemforge.usercode import register_usercode_agent

from conftest import desc_of
from fixtures import assembly_doc, measurement_doc


def test_resolve_script_pinned_versions(loaded, alice):
    script_item = desc_of(loaded, "PassFail")
    v1 = loaded.resolve_script(script_item, 1)
    assert v1.name == "PassFail" and v1.output_type == "route"
    with pytest.raises(ErrNotFound):
        loaded.resolve_script(script_item, 99)
    # finalize a v2 with different behavior; a v1 pin still resolves v1 bytes
    v2_doc = v1.to_xml().replace("PassPath", "AlwaysFail").replace(
        "FailPath", "AlwaysFail")
    loaded.descriptions.author_description(script_item, alice.agent_id, v2_doc)
    loaded.descriptions.finalize_version(script_item, alice.agent_id)
    assert "AlwaysFail" not in loaded.resolve_script(script_item, 1).body
    assert "AlwaysFail" in loaded.resolve_script(script_item, 2).body


def test_pinned_scripts_ignore_newer_versions(loaded, checked_desc, alice, bob):
    """Items built from v1 route identically after a v2 script appears."""
    script_item = desc_of(loaded, "PassFail")
    inverted = loaded.resolve_script(script_item, 1).to_xml().replace(
        'return "PassPath"', 'return "FailPath"')
    loaded.descriptions.author_description(script_item, alice.agent_id, inverted)
    loaded.descriptions.finalize_version(script_item, alice.agent_id)

    item = loaded.descriptions.instantiate(checked_desc, 1, "PIN-1", alice.agent_id)
    loaded.execute(item, bob.agent_id, "/Register", "Start")
    loaded.execute(item, bob.agent_id, "/Register", "Complete")
    loaded.execute(item, bob.agent_id, "/Measure", "Start")
    event = loaded.execute(item, bob.agent_id, "/Measure", "Complete",
                           outcome=measurement_doc(50.0))
    # v1 routing still applies: heavy part goes down PassPath
    assert [(d.path, d.choice) for d in event.decisions] == [("/Check", "PassPath")]


CROSS_SCRIPT = """<ScriptDesc name="TagPeer" language="minipy" output="any">
  <Body>
peer = get_property("Peer")
write_property("Status", "TOUCHED-BY-PEER", peer)
  </Body>
</ScriptDesc>"""

CROSS_WORKFLOW = """<WorkflowDesc name="Cross" routing="sequence">
  <Elementary name="Tag" role="operator">
    <Consequence script="TagPeer" version="1"/>
  </Elementary>
</WorkflowDesc>"""

CROSS_DESC = """<ItemDesc>
  <Workflow ref="CrossWorkflow" version="1"/>
  <Properties>
    <PropertyDef name="Status" type="string" default="NEW"/>
    <PropertyDef name="Peer" type="string" default=""/>
  </Properties>
</ItemDesc>"""


def test_cross_item_script_writes_are_evented(loaded, alice, bob):
    import_bundle(loaded, make_bundle([
        ("TagPeer", "ScriptDesc", CROSS_SCRIPT),
        ("CrossWorkflow", "WorkflowDesc", CROSS_WORKFLOW),
        ("CrossDesc", "ItemDesc", CROSS_DESC),
    ]), alice.agent_id)
    desc = desc_of(loaded, "CrossDesc")
    target = loaded.descriptions.instantiate(desc, 1, "CROSS-B", alice.agent_id)
    source = loaded.descriptions.instantiate(desc, 1, "CROSS-A", alice.agent_id,
                                             initial_properties=[("Peer", target)])
    before = len(loaded.store.events(target))
    loaded.execute(source, bob.agent_id, "/Tag", "Start")
    loaded.execute(source, bob.agent_id, "/Tag", "Complete")
    # the other item changed, and the change is explained by its own event
    assert loaded.get_property(target, "Status").value == "TOUCHED-BY-PEER"
    events = loaded.store.events(target)
    assert len(events) == before + 1
    assert events[-1].activity_path == "/predefined/WriteProperty"
    assert events[-1].agent == bob.agent_id
    # both items replay to their live state
    assert loaded.replay_item(source).canonical_bytes() == loaded.state_bytes(source)
    assert loaded.replay_item(target).canonical_bytes() == loaded.state_bytes(target)
    assert loaded.audit() == []


PING_SCRIPT = """<ScriptDesc name="PingPeer" language="minipy" output="any">
  <Body>
peer = get_property("Peer")
execute("/Hop", "Start", item=peer)
execute("/Hop", "Complete", item=peer)
  </Body>
</ScriptDesc>"""

PING_WORKFLOW = """<WorkflowDesc name="PingPong" routing="loop">
  <Condition language="minipy"><Code>True</Code></Condition>
  <Elementary name="Hop" role="operator">
    <Consequence script="PingPeer" version="1"/>
  </Elementary>
</WorkflowDesc>"""

PING_DESC = """<ItemDesc>
  <Workflow ref="PingWorkflow" version="1"/>
  <Properties><PropertyDef name="Peer" type="string" default=""/></Properties>
</ItemDesc>"""


def test_depth_limit_breaks_script_recursion(loaded, alice, bob):
    import_bundle(loaded, make_bundle([
        ("PingPeer", "ScriptDesc", PING_SCRIPT),
        ("PingWorkflow", "WorkflowDesc", PING_WORKFLOW),
        ("PingDesc", "ItemDesc", PING_DESC),
    ]), alice.agent_id)
    desc = desc_of(loaded, "PingDesc")
    a = loaded.descriptions.instantiate(desc, 1, "PING-A", alice.agent_id)
    b = loaded.descriptions.instantiate(desc, 1, "PING-B", alice.agent_id,
                                        initial_properties=[("Peer", a)])
    from itemforge import predefined
    loaded.apply_predefined(a, alice.agent_id, "WriteProperty",
                            predefined.write_property("Peer", b))
    started = time.monotonic()
    loaded.execute(a, bob.agent_id, "/Hop", "Start")
    with pytest.raises(ErrScriptFailure):
        loaded.execute(a, bob.agent_id, "/Hop", "Complete")
    assert time.monotonic() - started < 30  # terminates, never hangs
    # the anomaly is on the record
    assert any(e.activity_path == "/predefined/ScriptError"
               for e in loaded.store.events(a))
    assert loaded.replay_item(a).canonical_bytes() == loaded.state_bytes(a)
    assert loaded.replay_item(b).canonical_bytes() == loaded.state_bytes(b)
    assert loaded.audit() == []


# -- user-code agents -------------------------------------------------------------

def test_usercode_agent_executes_jobs_with_attribution(loaded, product_desc, alice):
    robot = loaded.agents.add("robot", "pw", ["operator"])
    done = threading.Event()

    def handler(job):
        if job.transition not in ("Start", "Complete"):
            return
        outcome = None
        if job.transition == "Complete" and job.activity_path == "/Measure":
            outcome = measurement_doc(12.0)
        elif job.transition == "Complete" and job.activity_path == "/Assemble":
            outcome = assembly_doc(2)
        try:
            loaded.execute(job.item, robot.agent_id, job.activity_path,
                           job.transition, outcome=outcome)
        except ErrInvalidTransition:
            return
        if loaded.state(job.item).workflow.finished():
            done.set()

    sub = register_usercode_agent(loaded, robot.agent_id, "operator", handler)
    try:
        item = loaded.descriptions.instantiate(product_desc, 1, "ROBO-1",
                                               alice.agent_id)
        assert done.wait(timeout=20), "robot did not finish the item"
        state = loaded.state(item)
        assert state.workflow.finished()
        agents = {e.agent for e in loaded.store.events(item)
                  if not e.activity_path.startswith("/predefined/CreateItem")}
        assert agents == {robot.agent_id}
    finally:
        sub.cancel()


def test_usercode_registration_requires_role(loaded):
    watcher = loaded.agents.add("watcher", "pw", ["viewer"])
    from itemforge.errors import ErrAccessDenied
    with pytest.raises(ErrAccessDenied):
        register_usercode_agent(loaded, watcher.agent_id, "operator", lambda j: None)


def test_two_handlers_race_exactly_one_wins(loaded, product_desc, alice):
    robot = loaded.agents.add("racer", "pw", ["operator"])
    results = []
    ready = threading.Barrier(3)

    def contender():
        ready.wait()
        jobs = loaded.jobs.wait_for_role("operator", timeout=10)
        starts = [j for j in jobs if j.transition == "Start"]
        assert starts, "no start job offered"
        job = starts[0]
        try:
            loaded.execute(job.item, robot.agent_id, job.activity_path,
                           job.transition)
            results.append("won")
        except ErrInvalidTransition:
            results.append("lost")

    threads = [threading.Thread(target=contender) for _ in range(2)]
    for t in threads:
        t.start()
    ready.wait()
    item = loaded.descriptions.instantiate(product_desc, 1, "RACE-POLL",
                                           alice.agent_id)
    for t in threads:
        t.join(timeout=15)
    assert sorted(results) == ["lost", "won"]
    register_events = [e for e in loaded.store.events(item)
                       if e.activity_path == "/Register"]
    assert len(register_events) == 1
