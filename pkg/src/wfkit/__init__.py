"""Verifier and evaluator toolkit for generated node-graph workflows."""

__version__ = "0.1.0"

from .codec import emit_code, emit_json, parse_code, parse_json
from .ir import (
    Link,
    Literal,
    NodeInstance,
    NodeSpec,
    WorkflowGraph,
    node_type_set,
    topological_order,
    validate_dag,
)

__all__ = [
    "Link",
    "Literal",
    "NodeInstance",
    "NodeSpec",
    "WorkflowGraph",
    "emit_code",
    "emit_json",
    "node_type_set",
    "parse_code",
    "parse_json",
    "topological_order",
    "validate_dag",
]
