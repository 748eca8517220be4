"""Conversion between API-format workflow JSON, the code form, and WorkflowGraph.

Code form, one statement per node in topological order::

    node_1 = CheckpointLoaderSimple(ckpt_name="v1-5.safetensors")
    node_2 = CLIPTextEncode(clip=node_1[1], text="a cat")

Links are positional (``node_k[i]`` is output slot ``i`` of node ``k``).
Literals are JSON-style: double-quoted strings, integers, floats rendered with
``repr`` (shortest exact form), and ``true``/``false``. Type and parameter
names that are not plain ASCII identifiers are written as quoted strings,
e.g. ``node_4 = "Image Resize (rgthree)"(image=node_3[0])``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union

from .errors import CodeSyntaxError, DuplicateDef, MalformedJson, SchemaError, UseBeforeDef
from .ir import Link, Literal, NodeInstance, WorkflowGraph, require_valid, topological_order

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_NUMERIC_ID = re.compile(r"[1-9][0-9]*\Z")
_NODE_VAR = re.compile(r"node_([1-9][0-9]*)\Z")


# -- JSON -------------------------------------------------------------------


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def _load(text: Union[bytes, str]):
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"not UTF-8: {exc}") from None
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except ValueError as exc:
        raise MalformedJson(str(exc)) from None


class _IdTable:
    """Maps source-file ids to positive integers; non-numeric ids get fresh ones."""

    def __init__(self, keys):
        self.table: dict[str, int] = {}
        self.aliases: dict[str, int] = {}
        numeric = [int(k) for k in keys if _NUMERIC_ID.match(k)]
        self._next = max(numeric, default=0) + 1
        for k in keys:
            self.resolve(k)

    def resolve(self, key: str) -> int:
        if key in self.table:
            return self.table[key]
        if _NUMERIC_ID.match(key):
            value = int(key)
        else:
            value = self._next
            self._next += 1
            self.aliases[key] = value
        self.table[key] = value
        return value


def _scalar(value, where):
    if isinstance(value, (str, bool, int, float)):
        return Literal(value)
    raise SchemaError(f"{where}: unsupported input value {value!r}")


def _is_link(value) -> bool:
    return (
        isinstance(value, list)
        and len(value) == 2
        and isinstance(value[0], (str, int))
        and not isinstance(value[0], bool)
        and isinstance(value[1], int)
        and not isinstance(value[1], bool)
    )


def parse_json(text: Union[bytes, str]) -> WorkflowGraph:
    """Decode an API-format workflow (``{id: {class_type, inputs}}``).

    Canvas exports (``{"nodes": [...], "links": [...]}``) are also accepted;
    only their execution-relevant structure is kept.
    """
    data = _load(text)
    if not isinstance(data, dict):
        raise SchemaError("top-level JSON value must be an object")
    if isinstance(data.get("nodes"), list) and "links" in data:
        return _parse_canvas(data)

    ids = _IdTable([str(k) for k in data])
    nodes = []
    for key, entry in data.items():
        if not isinstance(entry, dict):
            raise SchemaError(f"node {key}: entry must be an object")
        if "class_type" not in entry or "inputs" not in entry:
            missing = [f for f in ("class_type", "inputs") if f not in entry]
            raise SchemaError(f"node {key}: missing {', '.join(missing)}")
        class_type, inputs = entry["class_type"], entry["inputs"]
        if not isinstance(class_type, str) or not class_type:
            raise SchemaError(f"node {key}: class_type must be a nonempty string")
        if not isinstance(inputs, dict):
            raise SchemaError(f"node {key}: inputs must be an object")
        bindings = {}
        for name, value in inputs.items():
            if _is_link(value):
                if value[1] < 0:
                    raise SchemaError(f"node {key}: negative output index in {name!r}")
                bindings[name] = Link(ids.resolve(str(value[0])), value[1])
            else:
                bindings[name] = _scalar(value, f"node {key} input {name!r}")
        nodes.append(NodeInstance.make(ids.resolve(str(key)), class_type, bindings))
    return WorkflowGraph.from_nodes(nodes, ids.aliases)


def _parse_canvas(data: dict) -> WorkflowGraph:
    links = {}
    for row in data.get("links") or ():
        if not isinstance(row, list) or len(row) < 5:
            raise SchemaError(f"malformed canvas link {row!r}")
        links[row[0]] = (str(row[1]), int(row[2]))
    raw_nodes = data["nodes"]
    for n in raw_nodes:
        if not isinstance(n, dict) or "id" not in n or "type" not in n:
            raise SchemaError("canvas node missing id or type")
    ids = _IdTable([str(n["id"]) for n in raw_nodes])
    nodes = []
    for n in raw_nodes:
        bindings = {}
        widget_names = []
        for inp in n.get("inputs") or ():
            if inp.get("link") is not None:
                if inp["link"] not in links:
                    raise SchemaError(f"canvas node {n['id']}: unknown link {inp['link']}")
                src, slot = links[inp["link"]]
                bindings[inp["name"]] = Link(ids.resolve(src), slot)
            elif isinstance(inp.get("widget"), dict):
                widget_names.append(inp["widget"].get("name", inp["name"]))
        values = n.get("widgets_values") or []
        if isinstance(values, dict):
            pairs = list(values.items())
        elif len(values) == len(widget_names):
            pairs = list(zip(widget_names, values))
        else:
            pairs = [(f"widget_{i}", v) for i, v in enumerate(values)]
        for name, value in pairs:
            if name in bindings or value is None:
                continue
            try:
                bindings[name] = Literal(value)
            except (TypeError, ValueError):
                continue
        nodes.append(NodeInstance.make(ids.resolve(str(n["id"])), str(n["type"]), bindings))
    return WorkflowGraph.from_nodes(nodes, ids.aliases)


def graph_to_api(graph: WorkflowGraph) -> dict:
    out = {}
    for node in graph.nodes:
        inputs = {}
        for name, b in node.bindings:
            inputs[name] = [str(b.source_id), b.output_index] if isinstance(b, Link) else b.value
        out[str(node.id)] = {"class_type": node.type_name, "inputs": inputs}
    return out


def emit_json(graph: WorkflowGraph) -> bytes:
    """Canonical API-format bytes: ids ascending, inputs sorted, 2-space indent, trailing LF."""
    require_valid(graph)
    return (json.dumps(graph_to_api(graph), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# -- code form ----------------------------------------------------------------


@dataclass(frozen=True)
class VarRef:
    var_name: str
    output_index: int


Arg = tuple[str, Union[Literal, VarRef]]


@dataclass(frozen=True)
class Statement:
    var_name: str
    type_name: str
    args: tuple[Arg, ...] = ()


@dataclass(frozen=True)
class CodeScript:
    statements: tuple[Statement, ...] = ()


_LINE_BREAKING = re.compile("[\x7f-\x9f\u2028\u2029]")


def _quote(text: str) -> str:
    # JSON escapes C0 controls; also escape the characters str.splitlines treats as breaks
    return _LINE_BREAKING.sub(lambda m: f"\\u{ord(m.group()):04x}", json.dumps(text, ensure_ascii=False))


def _name(text: str) -> str:
    return text if _IDENT.match(text) else _quote(text)


def render_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return _quote(value)


def graph_to_script(graph: WorkflowGraph) -> CodeScript:
    require_valid(graph)
    statements = []
    for node_id in topological_order(graph):
        node = graph.node(node_id)
        args = []
        for name, b in node.bindings:
            args.append((name, VarRef(f"node_{b.source_id}", b.output_index) if isinstance(b, Link) else b))
        statements.append(Statement(f"node_{node_id}", node.type_name, tuple(args)))
    return CodeScript(tuple(statements))


def render_script(script: CodeScript) -> str:
    lines = []
    for st in script.statements:
        rendered = []
        for name, value in st.args:
            if isinstance(value, VarRef):
                rendered.append(f"{_name(name)}={value.var_name}[{value.output_index}]")
            else:
                rendered.append(f"{_name(name)}={render_literal(value.value)}")
        lines.append(f"{st.var_name} = {_name(st.type_name)}({', '.join(rendered)})\n")
    return "".join(lines)


def emit_code(graph: WorkflowGraph) -> str:
    return render_script(graph_to_script(graph))


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[=(),\[\]])
    """,
    re.VERBOSE,
)


def _tokenize(line: str, lineno: int) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise CodeSyntaxError(f"unexpected character {line[pos]!r} at column {pos + 1}", lineno)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group()))
        pos = m.end()
    return tokens


class _LineParser:
    def __init__(self, tokens, lineno):
        self.tokens = tokens
        self.pos = 0
        self.lineno = lineno

    def fail(self, message):
        raise CodeSyntaxError(message, self.lineno)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            self.fail(f"expected {want!r}, found {tok[1]!r}" if tok[0] else f"expected {want!r} at end of line")
        self.pos += 1
        return tok

    def name(self, what):
        kind, text = self.peek()
        if kind == "ident":
            self.pos += 1
            return text
        if kind == "string":
            self.pos += 1
            return json.loads(text)
        self.fail(f"expected {what}, found {text!r}")

    def value(self):
        kind, text = self.peek()
        if kind == "ident":
            self.pos += 1
            if text in ("true", "false"):
                return Literal(text == "true")
            self.take("punct", "[")
            _, idx = self.take("number")
            if not re.fullmatch(r"\d+", idx):
                self.fail(f"output index must be a non-negative integer, found {idx}")
            self.take("punct", "]")
            return VarRef(text, int(idx))
        if kind == "string":
            self.pos += 1
            try:
                return Literal(json.loads(text))
            except ValueError:
                self.fail(f"bad string literal {text}")
        if kind == "number":
            self.pos += 1
            if re.fullmatch(r"-?\d+", text):
                return Literal(int(text))
            return Literal(float(text))
        self.fail(f"expected a value, found {text!r}")

    def statement(self) -> Statement:
        _, var = self.take("ident")
        self.take("punct", "=")
        type_name = self.name("a node type")
        if not type_name:
            self.fail("empty node type")
        self.take("punct", "(")
        args = []
        if self.peek() != ("punct", ")"):
            while True:
                pname = self.name("a parameter name")
                self.take("punct", "=")
                args.append((pname, self.value()))
                if self.peek() == ("punct", ","):
                    self.pos += 1
                    continue
                break
        self.take("punct", ")")
        if self.pos != len(self.tokens):
            self.fail(f"trailing input {self.tokens[self.pos][1]!r}")
        names = [a[0] for a in args]
        if len(set(names)) != len(names):
            self.fail("duplicate parameter name")
        return Statement(var, type_name, tuple(args))


def parse_script(text: str) -> CodeScript:
    """Parse code text into statements, enforcing define-before-use."""
    statements = []
    defined: set[str] = set()
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        st = _LineParser(_tokenize(line, lineno), lineno).statement()
        for _, value in st.args:
            if isinstance(value, VarRef) and value.var_name not in defined:
                raise UseBeforeDef(f"{value.var_name!r} is not defined on an earlier line", lineno)
        if st.var_name in defined:
            raise DuplicateDef(f"{st.var_name!r} is already defined", lineno)
        defined.add(st.var_name)
        statements.append(st)
    return CodeScript(tuple(statements))


def script_to_graph(script: CodeScript) -> WorkflowGraph:
    ids: dict[str, int] = {}
    for st in script.statements:
        m = _NODE_VAR.match(st.var_name)
        if m:
            ids[st.var_name] = int(m.group(1))
    aliases = {}
    fresh = max(ids.values(), default=0) + 1
    for st in script.statements:
        if st.var_name not in ids:
            ids[st.var_name] = aliases[st.var_name] = fresh
            fresh += 1
    nodes = []
    for st in script.statements:
        bindings = {}
        for name, value in st.args:
            bindings[name] = Link(ids[value.var_name], value.output_index) if isinstance(value, VarRef) else value
        nodes.append(NodeInstance.make(ids[st.var_name], st.type_name, bindings))
    return WorkflowGraph.from_nodes(nodes, aliases)


def parse_code(text: str) -> WorkflowGraph:
    return script_to_graph(parse_script(text))
