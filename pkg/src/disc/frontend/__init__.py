from .graph import (
    FRAMEWORK_OPS, FrameworkGraph, FrameworkNode, TensorSpec, graph_from_json, load_graph, parse_graph,
    tensor_shapes, validate,
)
from .lower import lower_to_dhlo

__all__ = [
    "FRAMEWORK_OPS", "FrameworkGraph", "FrameworkNode", "TensorSpec", "graph_from_json", "load_graph",
    "parse_graph", "tensor_shapes", "validate", "lower_to_dhlo",
]
