from __future__ import annotations

import pytest

from wfkit.fixtures import generate_fixtures
from wfkit.ir import Link, Literal, NodeInstance, WorkflowGraph


def graph(*nodes) -> WorkflowGraph:
    """graph((id, type, {param: value-or-(src, idx)}), ...) with tuples meaning links."""
    built = []
    for node_id, type_name, *rest in nodes:
        bindings = {}
        for name, value in (rest[0] if rest else {}).items():
            bindings[name] = Link(*value) if isinstance(value, tuple) else Literal(value)
        built.append(NodeInstance.make(node_id, type_name, bindings))
    return WorkflowGraph.from_nodes(built)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    generate_fixtures(root)
    return root


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
