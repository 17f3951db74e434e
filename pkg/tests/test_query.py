import pytest

from itemforge import predefined
from itemforge.errors import ErrBadQuery, ErrNotFound, ErrRange
from itemforge.kernel import Kernel
from itemforge.query import (
    PathQuery,
    compare_values,
    export_trace,
    find_items,
    history,
    import_trace,
    lineage,
    query_outcomes,
)

from conftest import desc_of
from fixtures import measurement_doc
from test_kernel import drive_item


def test_path_query_parse_and_eval():
    doc = ('<Measurement grade="PASS"><weight>12.5</weight>'
           "<weight>13</weight><length>230</length></Measurement>")
    assert PathQuery.parse("/Measurement/weight").evaluate(doc) == ["12.5", "13"]
    assert PathQuery.parse("/Measurement/weight[2]").evaluate(doc) == ["13"]
    assert PathQuery.parse("/Measurement/@grade").evaluate(doc) == ["PASS"]
    assert PathQuery.parse("/Measurement/missing").evaluate(doc) == []
    assert PathQuery.parse("/Other/weight").evaluate(doc) == []


@pytest.mark.parametrize("expr", ["weight[", "/", "", "weight", "/a/[1]",
                                  "/a/@", "/a/b[0]", "/a//b"])
def test_path_query_rejects_malformed(expr):
    with pytest.raises(ErrBadQuery):
        PathQuery.parse(expr)


def test_compare_values_numeric_vs_text():
    assert compare_values("12.5", ">", "10")
    assert not compare_values("9", ">", "10")
    assert compare_values("abc", "<", "abd")  # text comparison
    assert compare_values("10", "=", "10.0")  # numeric equality
    with pytest.raises(ErrBadQuery):
        compare_values("1", "~", "2")


def test_history_fresh_item_has_single_create_event(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "H-1", alice.agent_id)
    page = history(loaded, item)
    assert len(page.events) == 1
    assert page.events[0]["activity_path"] == "/predefined/CreateItem"
    assert page.next_cursor is None


def test_history_pagination_20_20_10(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "H-2", alice.agent_id)
    # pump events to exactly 50 via property writes
    while len(loaded.store.events(item)) < 50:
        n = len(loaded.store.events(item))
        loaded.apply_predefined(item, alice.agent_id, "WriteProperty",
                                predefined.write_property("Batch", f"B{n}"))
    pages = []
    cursor = None
    while True:
        page = history(loaded, item, cursor=cursor, page_size=20)
        pages.append(page)
        if page.next_cursor is None:
            break
        cursor = page.next_cursor
    assert [len(p.events) for p in pages] == [20, 20, 10]
    ids = [e["id"] for p in pages for e in p.events]
    assert ids == list(range(50))


def test_history_bad_page_size(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "H-3", alice.agent_id)
    with pytest.raises(ErrRange):
        history(loaded, item, page_size=0)
    with pytest.raises(ErrRange):
        history(loaded, item, page_size=1001)
    with pytest.raises(ErrNotFound):
        history(loaded, "nope", page_size=10)


def test_lineage_of_instantiated_items(loaded, product_desc, alice):
    item = loaded.descriptions.instantiate(product_desc, 1, "L-1", alice.agent_id)
    record = lineage(loaded, item)
    assert record.description == product_desc
    assert record.version == 1
    assert record.instantiating_agent == alice.agent_id
    assert record.instantiated_at == 0


def test_lineage_of_bootstrap_root_not_found(loaded):
    meta = loaded.store.resolve_path("/desc/meta/ItemDesc")
    with pytest.raises(ErrNotFound):
        lineage(loaded, meta)


def brute_force_find(kernel, name, value, under=None):
    hits = []
    for item in kernel.store.items():
        state = kernel.replay_item(item)
        prop = state.properties.get(name)
        if prop is not None and prop.value == value:
            paths = [p for p, t in kernel.store.directory.items() if t == item]
            if under is None or any(p == under.rstrip("/")
                                    or p.startswith(under.rstrip("/") + "/")
                                    for p in paths):
                hits.append(item)
    return sorted(hits)


def test_find_items_equals_brute_force(loaded, product_desc, alice, bob):
    for i in range(6):
        item = loaded.descriptions.instantiate(product_desc, 1, f"F-{i}",
                                               alice.agent_id,
                                               under="/plant/products")
        if i % 2 == 0:
            drive_item(loaded, item, bob.agent_id, weight=11.0 + i)
    for name, value, under in [
        ("Status", "MEASURED-PASS", None),
        ("Status", "NEW", None),
        ("Status", "MEASURED-PASS", "/plant"),
        ("Name", "F-3", None),
        ("Name", "missing", None),
    ]:
        assert find_items(loaded, name, value, under=under) == \
            brute_force_find(loaded, name, value, under=under), (name, value)


def brute_force_outcomes(kernel, schema, path, comparator, literal, under=None):
    results = []
    query = PathQuery.parse(path)
    for item in kernel.store.items():
        state = kernel.replay_item(item)
        vp = state.viewpoints.get((schema, "last"))
        if vp is None:
            continue
        paths = [p for p, t in kernel.store.directory.items() if t == item]
        if under is not None and not any(
                p == under.rstrip("/") or p.startswith(under.rstrip("/") + "/")
                for p in paths):
            continue
        doc = kernel.store.read_outcome(item, vp.event_id).document
        for value in query.evaluate(doc):
            if compare_values(value, comparator, literal):
                results.append((item, value))
    return sorted(results)


def test_query_outcomes_equals_brute_force(loaded, product_desc, alice, bob):
    weights = [5.0, 9.5, 10.0, 12.5, 20.0]
    for i, w in enumerate(weights):
        item = loaded.descriptions.instantiate(product_desc, 1, f"Q-{i}",
                                               alice.agent_id)
        drive_item(loaded, item, bob.agent_id, weight=w)
    for comparator, literal in [(">", "10"), ("<=", "10"), ("=", "12.5"),
                                ("!=", "20.0"), (">=", "9.5")]:
        got = query_outcomes(loaded, "Measurement", "/Measurement/weight",
                             comparator, literal)
        want = brute_force_outcomes(loaded, "Measurement", "/Measurement/weight",
                                    comparator, literal)
        assert got == want, (comparator, literal)
    # weights above 10 are exactly the expected items
    above = {v for _, v in query_outcomes(loaded, "Measurement",
                                          "/Measurement/weight", ">", "10")}
    assert above == {"12.5", "20.0"}


def test_query_outcomes_missing_path_is_empty_not_error(loaded, product_desc,
                                                        alice, bob):
    item = loaded.descriptions.instantiate(product_desc, 1, "Q-MISS",
                                           alice.agent_id)
    drive_item(loaded, item, bob.agent_id)
    assert query_outcomes(loaded, "Measurement", "/Measurement/voltage",
                          ">", "1") == []


def test_query_outcomes_malformed_expression(loaded):
    with pytest.raises(ErrBadQuery):
        query_outcomes(loaded, "Measurement", "weight[", ">", "1")


def test_index_freshness_immediately_after_commit(loaded, product_desc, alice, bob):
    item = loaded.descriptions.instantiate(product_desc, 1, "FRESH-1",
                                           alice.agent_id)
    assert item in find_items(loaded, "Status", "NEW")
    drive_item(loaded, item, bob.agent_id)
    assert item not in find_items(loaded, "Status", "NEW")
    assert item in find_items(loaded, "Status", "MEASURED-PASS")


# -- export / import ------------------------------------------------------------

def test_export_fresh_item_contains_closure(loaded, product_desc, alice, tmp_path):
    import json
    import zipfile
    item = loaded.descriptions.instantiate(product_desc, 1, "X-1", alice.agent_id)
    archive = export_trace(loaded, item)
    path = tmp_path / "trace.zip"
    path.write_bytes(archive)
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        assert manifest["root"] == item
        # closure includes the product description and the workflow description
        assert product_desc in manifest["items"]
        assert desc_of(loaded, "AssemblyWorkflow") in manifest["items"]
        assert desc_of(loaded, "MeasurementSchema") in manifest["items"]
        log = zf.read(f"items/{item}/events.jsonl").decode()
        assert log.count("\n") == 1  # exactly the birth event


def test_export_contains_exact_pinned_workflow_bytes(loaded, product_desc, alice):
    import io
    import zipfile
    item = loaded.descriptions.instantiate(product_desc, 1, "X-2", alice.agent_id)
    wf_desc = desc_of(loaded, "AssemblyWorkflow")
    pinned = loaded.resolve_viewpoint(wf_desc, "WorkflowDesc", "1")
    with zipfile.ZipFile(io.BytesIO(export_trace(loaded, item))) as zf:
        names = [n for n in zf.namelist()
                 if n.startswith(f"items/{wf_desc}/outcomes/")
                 and n.endswith(f"{pinned.event_id}.WorkflowDesc.v1.xml")]
        assert names, "pinned workflow document missing from archive"
        assert zf.read(names[0]).decode() == pinned.document


def test_export_replay_in_fresh_store_is_identical(loaded, product_desc, alice,
                                                   bob, tmp_path):
    item = loaded.descriptions.instantiate(product_desc, 1, "X-3", alice.agent_id)
    drive_item(loaded, item, bob.agent_id)
    live = loaded.state_bytes(item)
    archive = export_trace(loaded, item)
    fresh = Kernel.empty(tmp_path / "fresh")
    root = import_trace(fresh, archive)
    assert root == item
    assert fresh.replay_item(item).canonical_bytes() == live
    # prefix replays agree too
    for k in (0, 2, 4):
        assert fresh.replay_item(item, up_to=k).canonical_bytes() == \
            loaded.replay_item(item, up_to=k).canonical_bytes()
