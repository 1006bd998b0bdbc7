"""Shared oracles and small utilities for the test-suite.

The brute-force functions here deliberately avoid the package's own shape
formulas so that they can serve as independent ground truth.
"""

from __future__ import annotations

import numpy as np

from disc.dhlo.ir import GraphBuilder, Sym, SymbolOrigin
from disc.frontend import graph_from_json


def rel_err(actual, expected) -> float:
    """Max relative error; NaN/inf must match exactly in position and sign."""
    a = np.asarray(actual, dtype=np.float64)
    b = np.asarray(expected, dtype=np.float64)
    if a.shape != b.shape:
        return float("inf")
    if a.size == 0:
        return 0.0
    nan_a, nan_b = np.isnan(a), np.isnan(b)
    if not np.array_equal(nan_a, nan_b):
        return float("inf")
    inf_a, inf_b = np.isinf(a), np.isinf(b)
    if not np.array_equal(inf_a, inf_b) or not np.array_equal(a[inf_a], b[inf_b]):
        return float("inf")
    finite = ~(nan_a | inf_a)
    if not finite.any():
        return 0.0
    a, b = a[finite], b[finite]
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)))


def max_rel_err(outs, refs) -> float:
    if len(outs) != len(refs):
        return float("inf")
    return max((rel_err(o, r) for o, r in zip(outs, refs)), default=0.0)


def graph(inputs, nodes, outputs, name="t"):
    return graph_from_json({
        "name": name,
        "inputs": [{"id": i, "shape": list(s)} for i, s in inputs],
        "outputs": list(outputs),
        "nodes": nodes,
    })


def node(nid, op, inputs, **attrs):
    return {"id": nid, "op": op, "inputs": list(inputs), "attrs": attrs}


def chain_graph(length: int = 10, shape=("B", "N")):
    ops = ["Exp", "Tanh", "Neg"]
    nodes, prev = [], "x"
    for i in range(length):
        nodes.append(node(f"n{i}", ops[i % 3], [prev]))
        prev = f"n{i}"
    return graph([("x", shape)], nodes, [prev], name=f"chain{length}")


# -- brute-force shape oracles -------------------------------------------------

def brute_slice_extent(start: int, limit: int, stride: int) -> int:
    count, i = 0, start
    while i < limit:
        count += 1
        i += stride
    return count


def brute_pad_extent(n: int, low: int, high: int, interior: int) -> int:
    out = ["p"] * low
    for i in range(n):
        if i:
            out += ["p"] * interior
        out.append(i)
    out += ["p"] * high
    return len(out)


def _param_inputs(b: GraphBuilder, names):
    """One rank-1 input per name; its runtime extent is the parameter value."""
    scalars = []
    for name in names:
        sym = b.new_sym(SymbolOrigin("input", name, 0, name))
        b.add_input(name, [sym])
        scalars.append(b.dim(name, 0))
    return scalars


def slice_param_graph():
    """``x[N]`` sliced with start/limit/stride all read from input extents."""
    b = GraphBuilder("slice_params")
    x_sym = b.new_sym(SymbolOrigin("input", "x", 0, "N"))
    b.add_input("x", [x_sym])
    start, limit, stride = _param_inputs(b, ["start", "limit", "stride"])
    out = b.reserve_id()
    out_sym = b.new_sym(SymbolOrigin("op", out, 0))
    b.emit("dynamic_slice", ["x", b.vector([start]), b.vector([limit]), b.vector([stride])], [out_sym], vid=out)
    return b.build([out]), out_sym


def pad_param_graph():
    """``x[N]`` padded with low/high/interior read from input extents."""
    b = GraphBuilder("pad_params")
    x_sym = b.new_sym(SymbolOrigin("input", "x", 0, "N"))
    b.add_input("x", [x_sym])
    low, high, interior = _param_inputs(b, ["low", "high", "interior"])
    value = b.const_f32(0.0)
    out = b.reserve_id()
    out_sym = b.new_sym(SymbolOrigin("op", out, 0))
    b.emit("dynamic_pad", ["x", value, b.vector([low]), b.vector([high]), b.vector([interior])], [out_sym], vid=out)
    return b.build([out]), out_sym


def bound_value(cs, env: dict, sym: Sym):
    rep = cs.find(sym)
    return rep if isinstance(rep, int) else env[rep.id]
