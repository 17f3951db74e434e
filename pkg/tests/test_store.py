import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itemforge.errors import ErrConfig, ErrNotFound, ErrRange, ErrStorage
from itemforge.events import Event
from itemforge.model import Outcome, new_ref
from itemforge.store import Store


def ev(i, item="x", outcome=False, schema=None):
    return Event(event_id=i, timestamp_ms=1000 + i, agent="a",
                 activity_path="/predefined/WriteProperty" if outcome else "/Act",
                 transition="Proceed" if outcome else "Start",
                 schema_ref=schema, has_outcome=outcome)


@pytest.fixture
def store(tmp_path):
    return Store.create(tmp_path / "s")


def test_first_append_gets_event_id_zero(store):
    item = new_ref()
    committed = store.append_txn(item, [(ev(0), None)])
    assert committed == 0
    assert store.last_event_id(item) == 0


def test_density_enforced(store):
    item = new_ref()
    store.append_txn(item, [(ev(0), None)])
    with pytest.raises(ErrStorage):
        store.append_txn(item, [(ev(2), None)])


def test_outcome_readable_immediately_after_append(store):
    item = new_ref()
    doc = "<WriteProperty name='x'><Value>1</Value></WriteProperty>"
    outcome = Outcome(item=item, schema_name="WriteProperty", schema_version=1,
                      event_id=0, document=doc)
    store.append_txn(item, [(ev(0, outcome=True, schema=("WriteProperty", 1)),
                             outcome)])
    assert store.read_outcome(item, 0).document == doc


def test_read_events_slices_and_ranges(store):
    item = new_ref()
    for i in range(10):
        store.append_txn(item, [(ev(i), None)])
    assert [e.event_id for e in store.read_events(item, 0, 9)] == list(range(10))
    assert [e.event_id for e in store.read_events(item, 3, 5)] == [3, 4, 5]
    with pytest.raises(ErrRange):
        store.read_events(item, 5, 3)
    with pytest.raises(ErrRange):
        store.read_events(item, 0, 99)
    with pytest.raises(ErrNotFound):
        store.read_events(new_ref(), 0, 0)


@settings(max_examples=30, deadline=None)
@given(total=st.integers(1, 40), k=st.integers(0, 39))
def test_slice_lengths_sum(tmp_path_factory, total, k):
    store = Store.create(tmp_path_factory.mktemp("s") / "s")
    item = new_ref()
    for i in range(total):
        store.append_txn(item, [(ev(i), None)])
    k = min(k, total - 1)
    left = store.read_events(item, 0, k)
    right = store.read_events(item, k + 1, total - 1) if k + 1 <= total - 1 else []
    assert len(left) + len(right) == len(store.read_events(item, 0, total - 1))


def test_reopen_recovers_committed_events(tmp_path):
    store = Store.create(tmp_path / "s")
    item = new_ref()
    for i in range(5):
        store.append_txn(item, [(ev(i), None)])
    again = Store.open(tmp_path / "s")
    assert again.last_event_id(item) == 4


def test_torn_tail_is_truncated(tmp_path):
    store = Store.create(tmp_path / "s")
    item = new_ref()
    for i in range(3):
        store.append_txn(item, [(ev(i), None)])
    log = tmp_path / "s" / "items" / item / "events.jsonl"
    with open(log, "ab") as fh:
        fh.write(b'{"id":3,"ts":1,"agent":"a","path":"/Act","transition"')
    again = Store.open(tmp_path / "s")
    assert again.last_event_id(item) == 2
    # the torn bytes are gone from disk
    assert log.read_bytes().endswith(b"\n")


def test_uncommitted_group_is_truncated(tmp_path):
    store = Store.create(tmp_path / "s")
    item = new_ref()
    store.append_txn(item, [(ev(0), None)])
    log = tmp_path / "s" / "items" / item / "events.jsonl"
    # complete line but missing the commit marker: must be discarded
    orphan = json.loads(ev(1).to_json())
    with open(log, "ab") as fh:
        fh.write((json.dumps(orphan) + "\n").encode())
    again = Store.open(tmp_path / "s")
    assert again.last_event_id(item) == 0


def test_multi_event_txn_commits_atomically(tmp_path):
    store = Store.create(tmp_path / "s")
    item = new_ref()
    store.append_txn(item, [(ev(0), None), (ev(1), None), (ev(2), None)])
    again = Store.open(tmp_path / "s")
    assert again.last_event_id(item) == 2


def test_directory_resolution_and_children(store):
    a, b, c = new_ref(), new_ref(), new_ref()
    store.add_path("/plant/products/P1", a)
    store.add_path("/plant/products/P2", b)
    store.add_path("/plant", c)
    assert store.resolve_path("/plant/products/P1") == a
    with pytest.raises(ErrNotFound):
        store.resolve_path("/nope")
    children = store.list_children("/plant/products")
    assert children == [("P1", a), ("P2", b)]
    assert store.list_children("/") == [("plant", c)]
    assert store.list_children("/unknown") == []


def test_list_children_sorted_with_many_entries(store):
    refs = {}
    for i in range(300):
        r = new_ref()
        refs[f"i{i:04d}"] = r
        store.add_path(f"/bulk/i{i:04d}", r)
    children = store.list_children("/bulk")
    assert len(children) == 300
    assert [n for n, _ in children] == sorted(refs)


def test_open_rejects_non_store_and_bad_format(tmp_path):
    with pytest.raises(ErrConfig):
        Store.open(tmp_path / "missing")
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps({"format": 99}))
    with pytest.raises(ErrConfig):
        Store.open(bad)
    with pytest.raises(ErrConfig):
        Store.create(bad)  # non-empty directory


def test_restore_item_round_trip(tmp_path):
    src = Store.create(tmp_path / "src")
    item = new_ref()
    doc = "<WriteProperty name='x'><Value>1</Value></WriteProperty>"
    src.append_txn(item, [(ev(0, outcome=True, schema=("WriteProperty", 1)),
                           Outcome(item=item, schema_name="WriteProperty",
                                   schema_version=1, event_id=0, document=doc))])
    log = src.raw_log(item)
    outcomes = dict(src.outcome_files(item))
    dst = Store.create(tmp_path / "dst")
    dst.restore_item(item, log, outcomes)
    assert dst.last_event_id(item) == 0
    assert dst.read_outcome(item, 0).document == doc
    with pytest.raises(ErrStorage):
        dst.restore_item(item, log, outcomes)  # refuses overwrite
