"""Embedded deterministic script interpreter ("minipy").

Scripts route conditional splits and enact consequences of activity
execution. The contract: deterministic given the supplied bindings,
sandboxed (no storage handles, no imports, no attribute access), and
wall-clock bounded. State effects happen only through the kernel gateway
callables injected into the environment, so every write a script performs
is logged as a predefined-step event somewhere.

The language is a small Python subset evaluated over the ast module:
literals, names, arithmetic/boolean/comparison operators, if/elif/else,
for over lists or range, assignments, f-strings, and calls to whitelisted
functions. `return` is allowed at the top level; alternatively the script
may assign to `result` or end with a bare expression.
"""

from __future__ import annotations

import ast
import time
from dataclasses import dataclass, field
from xml.etree import ElementTree as ET

from .errors import ErrMalformedXML, ErrScriptFailure, ErrSchemaViolation

LANGUAGE = "minipy"

VALUE_TYPES = ("string", "integer", "decimal", "boolean")

_BUILTINS = {
    "str": str, "int": int, "float": float, "bool": bool,
    "abs": abs, "min": min, "max": max, "round": round, "len": len,
    "range": range, "sorted": sorted, "sum": sum,
    "True": True, "False": False, "None": None,
}

_MAX_STEPS = 200_000
_CLOCK_CHECK_EVERY = 256


@dataclass
class ScriptDef:
    name: str
    language_tag: str
    inputs: list[tuple[str, str]]
    output_type: str  # value type, "route", or "any" (effect-only)
    body: str
    # inline workflow snippets bind the whole context instead of declared inputs
    implicit: bool = False

    def to_xml(self) -> str:
        elem = ET.Element("ScriptDesc", name=self.name, language=self.language_tag,
                          output=self.output_type)
        for iname, itype in self.inputs:
            ET.SubElement(elem, "Input", name=iname, type=itype)
        body = ET.SubElement(elem, "Body")
        body.text = self.body
        ET.indent(elem)
        return ET.tostring(elem, encoding="unicode")


def parse_script_def(document: str) -> ScriptDef:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise ErrMalformedXML(f"script document: {exc}") from exc
    if root.tag != "ScriptDesc":
        raise ErrSchemaViolation("script document root must be ScriptDesc")
    inputs = []
    for inp in root.findall("Input"):
        iname, itype = inp.get("name", ""), inp.get("type", "string")
        if not iname or itype not in VALUE_TYPES:
            raise ErrSchemaViolation(f"bad script input ({iname!r}, {itype!r})")
        if iname in [n for n, _ in inputs]:
            raise ErrSchemaViolation(f"duplicate script input '{iname}'")
        inputs.append((iname, itype))
    body = root.find("Body")
    return ScriptDef(
        name=root.get("name", ""),
        language_tag=root.get("language", LANGUAGE),
        inputs=inputs,
        output_type=root.get("output", "string"),
        body=(body.text or "") if body is not None else "",
    )


@dataclass
class ScriptContext:
    """Everything a script may see; no storage handles are reachable."""

    item: str
    activity_path: str
    bindings: dict[str, object] = field(default_factory=dict)
    gateway: dict[str, object] = field(default_factory=dict)  # name -> callable
    timeout: float = 5.0
    depth: int = 0


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class _Interp:
    def __init__(self, env: dict[str, object], deadline: float):
        self.env = env
        self.deadline = deadline
        self.steps = 0

    def tick(self):
        self.steps += 1
        if self.steps > _MAX_STEPS:
            raise ErrScriptFailure("script exceeded the evaluation budget")
        if self.steps % _CLOCK_CHECK_EVERY == 0 and time.monotonic() > self.deadline:
            raise ErrScriptFailure("script timed out")

    def run(self, body: list[ast.stmt]):
        result = None
        try:
            for stmt in body:
                result = self.exec_stmt(stmt)
        except _Return as ret:
            return ret.value
        if "result" in self.env:
            return self.env["result"]
        return result

    def exec_stmt(self, node: ast.stmt):
        self.tick()
        if isinstance(node, ast.Expr):
            return self.eval(node.value)
        if isinstance(node, ast.Assign):
            if len(node.targets) != 1 or not isinstance(node.targets[0], ast.Name):
                raise ErrScriptFailure("only simple `name = value` assignment is allowed")
            self.env[node.targets[0].id] = self.eval(node.value)
            return None
        if isinstance(node, ast.AugAssign):
            if not isinstance(node.target, ast.Name):
                raise ErrScriptFailure("only simple augmented assignment is allowed")
            current = self.lookup(node.target.id)
            self.env[node.target.id] = self.binop(node.op, current, self.eval(node.value))
            return None
        if isinstance(node, ast.If):
            branch = node.body if self.eval(node.test) else node.orelse
            result = None
            for stmt in branch:
                result = self.exec_stmt(stmt)
            return result
        if isinstance(node, ast.For):
            if not isinstance(node.target, ast.Name):
                raise ErrScriptFailure("for loops may only bind a single name")
            iterable = self.eval(node.iter)
            if not isinstance(iterable, (list, tuple, range, str)):
                raise ErrScriptFailure("for loops may iterate lists, ranges or strings")
            for value in iterable:
                self.tick()
                self.env[node.target.id] = value
                try:
                    for stmt in node.body:
                        self.exec_stmt(stmt)
                except _Break:
                    break
                except _Continue:
                    continue
            return None
        if isinstance(node, ast.Return):
            raise _Return(self.eval(node.value) if node.value is not None else None)
        if isinstance(node, ast.Break):
            raise _Break()
        if isinstance(node, ast.Continue):
            raise _Continue()
        if isinstance(node, ast.Pass):
            return None
        raise ErrScriptFailure(f"statement {type(node).__name__} is not allowed")

    def lookup(self, name: str):
        if name not in self.env:
            raise ErrScriptFailure(f"name '{name}' is not bound")
        return self.env[name]

    def eval(self, node: ast.expr):
        self.tick()
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (str, int, float, bool)) or node.value is None:
                return node.value
            raise ErrScriptFailure(f"literal {node.value!r} is not allowed")
        if isinstance(node, ast.Name):
            return self.lookup(node.id)
        if isinstance(node, ast.BoolOp):
            if isinstance(node.op, ast.And):
                value = True
                for v in node.values:
                    value = self.eval(v)
                    if not value:
                        return value
                return value
            value = False
            for v in node.values:
                value = self.eval(v)
                if value:
                    return value
            return value
        if isinstance(node, ast.UnaryOp):
            operand = self.eval(node.operand)
            if isinstance(node.op, ast.Not):
                return not operand
            if isinstance(node.op, ast.USub):
                return -operand
            if isinstance(node.op, ast.UAdd):
                return +operand
            raise ErrScriptFailure("unary operator not allowed")
        if isinstance(node, ast.BinOp):
            return self.binop(node.op, self.eval(node.left), self.eval(node.right))
        if isinstance(node, ast.Compare):
            left = self.eval(node.left)
            for op, comparator in zip(node.ops, node.comparators):
                right = self.eval(comparator)
                if not self.compare(op, left, right):
                    return False
                left = right
            return True
        if isinstance(node, ast.IfExp):
            return self.eval(node.body) if self.eval(node.test) else self.eval(node.orelse)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name):
                raise ErrScriptFailure("only plain function calls are allowed")
            func = self.lookup(node.func.id)
            if not callable(func):
                raise ErrScriptFailure(f"'{node.func.id}' is not callable")
            args = [self.eval(a) for a in node.args]
            kwargs = {}
            for kw in node.keywords:
                if kw.arg is None:
                    raise ErrScriptFailure("** call arguments are not allowed")
                kwargs[kw.arg] = self.eval(kw.value)
            return func(*args, **kwargs)
        if isinstance(node, ast.List):
            return [self.eval(e) for e in node.elts]
        if isinstance(node, ast.Tuple):
            return tuple(self.eval(e) for e in node.elts)
        if isinstance(node, ast.Dict):
            out = {}
            for k, v in zip(node.keys, node.values):
                if k is None:
                    raise ErrScriptFailure("** dict expansion is not allowed")
                out[self.eval(k)] = self.eval(v)
            return out
        if isinstance(node, ast.Subscript):
            container = self.eval(node.value)
            return container[self.eval(node.slice)]
        if isinstance(node, ast.JoinedStr):
            parts = []
            for v in node.values:
                if isinstance(v, ast.FormattedValue):
                    parts.append(str(self.eval(v.value)))
                else:
                    parts.append(str(self.eval(v)))
            return "".join(parts)
        raise ErrScriptFailure(f"expression {type(node).__name__} is not allowed")

    def binop(self, op: ast.operator, left, right):
        try:
            if isinstance(op, ast.Add):
                return left + right
            if isinstance(op, ast.Sub):
                return left - right
            if isinstance(op, ast.Mult):
                return left * right
            if isinstance(op, ast.Div):
                return left / right
            if isinstance(op, ast.FloorDiv):
                return left // right
            if isinstance(op, ast.Mod):
                return left % right
            if isinstance(op, ast.Pow):
                return left ** right
        except (TypeError, ZeroDivisionError, ValueError) as exc:
            raise ErrScriptFailure(f"arithmetic error: {exc}") from exc
        raise ErrScriptFailure("operator not allowed")

    def compare(self, op: ast.cmpop, left, right) -> bool:
        try:
            if isinstance(op, ast.Eq):
                return left == right
            if isinstance(op, ast.NotEq):
                return left != right
            if isinstance(op, ast.Lt):
                return left < right
            if isinstance(op, ast.LtE):
                return left <= right
            if isinstance(op, ast.Gt):
                return left > right
            if isinstance(op, ast.GtE):
                return left >= right
            if isinstance(op, ast.In):
                return left in right
            if isinstance(op, ast.NotIn):
                return left not in right
        except TypeError as exc:
            raise ErrScriptFailure(f"comparison error: {exc}") from exc
        raise ErrScriptFailure("comparison operator not allowed")


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


def _parse_body(body: str) -> list[ast.stmt]:
    # wrap so top-level `return` parses; the wrapper never executes
    indented = "\n".join("    " + line for line in body.splitlines())
    source = f"def __script__():\n{indented or '    pass'}"
    try:
        module = ast.parse(source)
    except SyntaxError as exc:
        raise ErrScriptFailure(f"script syntax error: {exc}") from exc
    func = module.body[0]
    assert isinstance(func, ast.FunctionDef)
    return func.body


def _check_type(value, value_type: str) -> bool:
    if value_type == "string":
        return isinstance(value, str)
    if value_type == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if value_type == "decimal":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if value_type == "boolean":
        return isinstance(value, bool)
    return False


def run_script(defn: ScriptDef, ctx: ScriptContext):
    """Execute a script definition in a context; returns the typed result.

    Raises ErrScriptFailure on raised errors, timeout, budget overflow,
    unbound inputs, or an output that does not match the declared type.
    """
    if defn.language_tag != LANGUAGE:
        raise ErrScriptFailure(
            f"script '{defn.name}': unsupported language tag '{defn.language_tag}'")
    env: dict[str, object] = dict(_BUILTINS)
    env.update(ctx.gateway)
    if defn.implicit:
        env.update(ctx.bindings)
    else:
        for iname, itype in defn.inputs:
            if iname not in ctx.bindings:
                raise ErrScriptFailure(
                    f"script '{defn.name}': input '{iname}' is not bound")
            value = ctx.bindings[iname]
            if not _check_type(value, itype):
                raise ErrScriptFailure(
                    f"script '{defn.name}': input '{iname}' is not a {itype}: {value!r}")
            env[iname] = value
    env["item"] = ctx.item
    env["activity_path"] = ctx.activity_path

    body = _parse_body(defn.body)
    interp = _Interp(env, deadline=time.monotonic() + ctx.timeout)
    try:
        value = interp.run(body)
    except ErrScriptFailure:
        raise
    except Exception as exc:
        raise ErrScriptFailure(f"script '{defn.name}' raised: {exc}") from exc

    if defn.output_type == "any":
        return value
    if defn.output_type == "route":
        if not isinstance(value, str) or not value:
            raise ErrScriptFailure(
                f"script '{defn.name}' must return a route name, got {value!r}")
        return value
    if not _check_type(value, defn.output_type):
        raise ErrScriptFailure(
            f"script '{defn.name}' must return {defn.output_type}, got {value!r}")
    return value
