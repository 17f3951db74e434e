import pytest

from itemforge.errors import ErrConstraint, ErrEmptySlot, ErrNotFound
from itemforge.model import Collection, ItemState, Property, Slot, new_ref


def test_property_value_must_parse_under_declared_type():
    Property("Weight", "12.5", "decimal")
    with pytest.raises(ErrConstraint):
        Property("Weight", "heavy", "decimal")
    with pytest.raises(ErrConstraint):
        Property("Flag", "yes", "boolean")
    with pytest.raises(ErrConstraint):
        Property("N", "1", "float")  # not a declared type


def test_typed_value_conversions():
    assert Property("a", "42", "integer").typed_value() == 42
    assert Property("b", "2.5", "decimal").typed_value() == 2.5
    assert Property("c", "true", "boolean").typed_value() is True
    assert Property("d", "x", "string").typed_value() == "x"


def test_dependency_collection_add_and_remove():
    coll = Collection("RelatedTo", "dependency")
    a, b = new_ref(), new_ref()
    s0 = coll.add_member(a)
    s1 = coll.add_member(b)
    assert (s0.slot_id, s1.slot_id) == (0, 1)
    coll.remove_member(0)
    assert [s.slot_id for s in coll.slots] == [1]
    # ids never reused downward
    assert coll.add_member(a).slot_id == 2


def test_aggregation_slots():
    coll = Collection("SubParts", "aggregation", [Slot(i) for i in range(3)])
    target = new_ref()
    coll.assign_slot(1, target)
    with pytest.raises(ErrConstraint):
        coll.assign_slot(1, new_ref())  # occupied
    with pytest.raises(ErrNotFound):
        coll.assign_slot(9, target)
    coll.remove_member(1)
    assert coll.slot(1).target is None
    with pytest.raises(ErrConstraint):
        coll.remove_member(1)  # already empty


def test_kind_mismatch_operations():
    dep = Collection("d", "dependency")
    agg = Collection("a", "aggregation", [Slot(0)])
    with pytest.raises(ErrConstraint):
        dep.assign_slot(0, new_ref())
    with pytest.raises(ErrConstraint):
        agg.add_member(new_ref())


def test_item_state_traverse():
    item = new_ref()
    target = new_ref()
    state = ItemState(item=item)
    state.collections["SubParts"] = Collection(
        "SubParts", "aggregation", [Slot(0), Slot(1, target=target)])
    assert state.traverse("SubParts", 1) == target
    with pytest.raises(ErrEmptySlot):
        state.traverse("SubParts", 0)
    with pytest.raises(ErrNotFound):
        state.traverse("Nope", 0)


def test_state_lookups_raise_not_found():
    state = ItemState(item=new_ref())
    with pytest.raises(ErrNotFound):
        state.property("")
    with pytest.raises(ErrNotFound):
        state.viewpoint("Measurement", "last")


def test_canonical_bytes_are_order_independent():
    item = new_ref()
    a = ItemState(item=item)
    a.properties["B"] = Property("B", "2")
    a.properties["A"] = Property("A", "1")
    b = ItemState(item=item)
    b.properties["A"] = Property("A", "1")
    b.properties["B"] = Property("B", "2")
    assert a.canonical_bytes() == b.canonical_bytes()
