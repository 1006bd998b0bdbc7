"""JSON persistence and the one-op-per-line textual dump of DHLO graphs."""

from __future__ import annotations

import json

from .ir import (
    DhloGraph, DhloOp, SymbolOrigin, Value, dim_from_json, dim_to_json, format_dim, format_shape,
)

FORMAT = "disc.dhlo"
VERSION = 1


def graph_to_json(g: DhloGraph) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "name": g.name,
        "inputs": [
            {"id": v.id, "shape": [dim_to_json(d) for d in v.shape], "dtype": v.dtype} for v in g.inputs
        ],
        "outputs": list(g.outputs),
        "ops": [
            {
                "id": op.id,
                "kind": op.kind,
                "inputs": list(op.inputs),
                "attrs": op.attrs,
                "shape": [dim_to_json(d) for d in op.shape],
                "dtype": op.dtype,
            }
            for op in g.ops
        ],
        "symbols": [
            {"id": sid, "kind": o.kind, "ref": o.ref, "axis": o.axis, "name": o.name}
            for sid, o in sorted(g.symbols.items())
        ],
    }


def graph_from_json(doc: dict) -> DhloGraph:
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ValueError(f"not a {FORMAT} v{VERSION} document")
    inputs = tuple(
        Value(v["id"], tuple(dim_from_json(d) for d in v["shape"]), v["dtype"]) for v in doc["inputs"]
    )
    ops = tuple(
        DhloOp(
            o["id"], o["kind"], tuple(o["inputs"]),
            tuple(dim_from_json(d) for d in o["shape"]), o["dtype"], dict(o["attrs"]),
        )
        for o in doc["ops"]
    )
    symbols = {
        s["id"]: SymbolOrigin(s["kind"], s["ref"], s["axis"], s.get("name")) for s in doc["symbols"]
    }
    return DhloGraph(doc["name"], inputs, tuple(doc["outputs"]), ops, symbols)


def dumps(g: DhloGraph) -> str:
    return json.dumps(graph_to_json(g), sort_keys=True, indent=1) + "\n"


def loads(text: str) -> DhloGraph:
    return graph_from_json(json.loads(text))


def _format_attr(value) -> str:
    if isinstance(value, list):
        return "[" + ",".join(_format_attr(v) for v in value) + "]"
    return repr(value) if isinstance(value, str) else str(value)


def format_op(op: DhloOp) -> str:
    kind = f"reduce_{op.attrs['mode']}" if op.kind == "reduce" else op.kind
    attrs = {k: v for k, v in sorted(op.attrs.items()) if not (op.kind == "reduce" and k == "mode")}
    attr_text = ""
    if attrs:
        attr_text = " {" + ", ".join(f"{k}={_format_attr(v)}" for k, v in attrs.items()) + "}"
    args = ", ".join(f"%{a}" for a in op.inputs)
    dtype = "" if op.dtype == "f32" else f" {op.dtype}"
    return f"%{op.id} = {kind}({args}){attr_text} : {format_shape(op.shape)}{dtype}"


def to_text(g: DhloGraph) -> str:
    """Textual dump: a header, one op per line, a return line, then symbol origins."""
    params = ", ".join(f"%{v.id}: {format_shape(v.shape)}" for v in g.inputs)
    lines = [f"graph {g.name}({params}) {{"]
    lines += ["  " + format_op(op) for op in g.ops]
    lines.append("  return " + ", ".join(f"%{o}" for o in g.outputs))
    lines.append("}")
    for sid, origin in sorted(g.symbols.items()):
        lines.append(f"# s{sid} <- {origin.describe()}")
    return "\n".join(lines) + "\n"


__all__ = ["dumps", "loads", "graph_to_json", "graph_from_json", "to_text", "format_op", "format_dim"]
