import pytest

from itemforge.errors import ErrScriptFailure
from itemforge.scripting import (
    ScriptContext,
    ScriptDef,
    parse_script_def,
    run_script,
)

from fixtures import PASSFAIL_SCRIPT


def make(body, output="string", inputs=(), implicit=False):
    return ScriptDef(name="t", language_tag="minipy", inputs=list(inputs),
                     output_type=output, body=body, implicit=implicit)


def ctx(bindings=None, gateway=None, timeout=5.0, depth=0):
    return ScriptContext(item="i", activity_path="/a",
                         bindings=bindings or {}, gateway=gateway or {},
                         timeout=timeout, depth=depth)


def test_routing_script_from_fixture():
    defn = parse_script_def(PASSFAIL_SCRIPT)
    assert defn.output_type == "route"
    assert defn.inputs == [("weight", "decimal")]
    assert run_script(defn, ctx({"weight": 12.5})) == "PassPath"
    assert run_script(defn, ctx({"weight": 9.0})) == "FailPath"


def test_declared_output_type_enforced():
    defn = make("return 'yes'", output="boolean")
    with pytest.raises(ErrScriptFailure) as err:
        run_script(defn, ctx())
    assert "must return boolean" in str(err.value)


def test_route_output_must_be_nonempty_string():
    with pytest.raises(ErrScriptFailure):
        run_script(make("return ''", output="route"), ctx())
    with pytest.raises(ErrScriptFailure):
        run_script(make("return 3", output="route"), ctx())


def test_result_variable_and_final_expression_conventions():
    assert run_script(make("result = 1 + 1", output="integer"), ctx()) == 2
    assert run_script(make("40 + 2", output="integer"), ctx()) == 42


def test_inputs_bound_and_type_checked():
    defn = make("return weight * 2", output="decimal",
                inputs=[("weight", "decimal")])
    assert run_script(defn, ctx({"weight": 3.5})) == 7.0
    with pytest.raises(ErrScriptFailure):
        run_script(defn, ctx({}))  # unbound
    with pytest.raises(ErrScriptFailure):
        run_script(defn, ctx({"weight": "heavy"}))  # wrong type


def test_gateway_calls_flow_through():
    calls = []
    defn = make("write_property('Status', 'MEASURED')", output="any")
    run_script(defn, ctx(gateway={
        "write_property": lambda n, v: calls.append((n, v))}))
    assert calls == [("Status", "MEASURED")]


def test_sandbox_blocks_imports_attributes_and_dunder():
    for body in [
        "import os",
        "open('/etc/passwd')",
        "().__class__",
        "x = [].__class__",
        "getattr(str, 'join')",
    ]:
        with pytest.raises(ErrScriptFailure):
            run_script(make(body, output="any"), ctx())


def test_evaluation_budget_stops_runaway_loops():
    body = """
total = 0
for i in range(100000):
    for j in range(100000):
        total += 1
"""
    with pytest.raises(ErrScriptFailure) as err:
        run_script(make(body, output="any"), ctx())
    assert "budget" in str(err.value) or "timed out" in str(err.value)


def test_wall_clock_timeout():
    body = """
total = 0
for i in range(100000):
    total = total + i
"""
    with pytest.raises(ErrScriptFailure) as err:
        run_script(make(body, output="any"), ctx(timeout=0.0))
    assert "timed out" in str(err.value) or "budget" in str(err.value)


def test_unknown_language_tag_rejected():
    defn = ScriptDef(name="t", language_tag="cobol", inputs=[],
                     output_type="string", body="return 'x'")
    with pytest.raises(ErrScriptFailure) as err:
        run_script(defn, ctx())
    assert "language" in str(err.value)


def test_raised_errors_wrapped():
    with pytest.raises(ErrScriptFailure) as err:
        run_script(make("return 1 / 0", output="any"), ctx())
    assert "arithmetic" in str(err.value)


def test_implicit_bindings_for_inline_snippets():
    defn = make("weight > 10", output="boolean", implicit=True)
    assert run_script(defn, ctx({"weight": 11.0})) is True
    assert run_script(defn, ctx({"weight": 9.0})) is False


def test_fstrings_conditionals_and_collections():
    body = """
parts = [1, 2, 3]
label = f"n={len(parts)}"
return label if sum(parts) == 6 else "bad"
"""
    assert run_script(make(body, output="string"), ctx()) == "n=3"


def test_script_def_xml_round_trip():
    defn = parse_script_def(PASSFAIL_SCRIPT)
    again = parse_script_def(defn.to_xml())
    assert again.inputs == defn.inputs
    assert again.output_type == defn.output_type
    assert again.body.strip() == defn.body.strip()
