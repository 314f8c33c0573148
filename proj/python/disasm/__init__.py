"""Probabilistic disassembly planning (C++ core)."""

from ._core import (
    DisasmError,
    Graph,
    IncompatibleError,
    InputError,
    ModelError,
    ResourceCapError,
    bayes_update,
    build_graph,
    evaluate,
    expected_time,
    extract_relation,
    feasibility,
    q_learn,
    rollout,
    success_probability,
    value_iteration,
)

__all__ = [
    "DisasmError",
    "Graph",
    "IncompatibleError",
    "InputError",
    "ModelError",
    "ResourceCapError",
    "bayes_update",
    "build_graph",
    "evaluate",
    "expected_time",
    "extract_relation",
    "feasibility",
    "q_learn",
    "rollout",
    "success_probability",
    "value_iteration",
]
