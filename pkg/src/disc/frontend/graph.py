"""Framework-level graph format: parsing and validation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from ..errors import GraphParseError, GraphValidationError

IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")

BINARY_OPS = {"Add": "add", "Sub": "sub", "Mul": "mul", "Div": "div", "Maximum": "maximum"}
UNARY_OPS = {"Exp": "exp", "Tanh": "tanh", "Neg": "neg"}
FRAMEWORK_OPS = frozenset(BINARY_OPS) | frozenset(UNARY_OPS) | frozenset({
    "ReduceSum", "ReduceMax", "Transpose", "Reshape", "Broadcast", "Slice", "Pad",
    "Split", "Concat", "MatMul", "Softmax",
})


@dataclass(frozen=True)
class TensorSpec:
    id: str
    shape: tuple  # entries: int or symbol name
    dtype: str = "f32"


@dataclass(frozen=True)
class FrameworkNode:
    id: str
    op: str
    inputs: tuple
    attrs: dict = field(default_factory=dict)
    outputs: tuple = ()

    __hash__ = None


@dataclass(frozen=True)
class FrameworkGraph:
    name: str
    inputs: tuple
    outputs: tuple
    nodes: tuple

    __hash__ = None

    def to_json(self) -> dict:
        nodes = []
        for n in self.nodes:
            d = {"id": n.id, "op": n.op, "inputs": list(n.inputs), "attrs": _plain(n.attrs)}
            if n.outputs != (n.id,):
                d["outputs"] = list(n.outputs)
            nodes.append(d)
        return {
            "name": self.name,
            "inputs": [{"id": t.id, "shape": list(t.shape), "dtype": t.dtype} for t in self.inputs],
            "outputs": list(self.outputs),
            "nodes": nodes,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


class Unknown:
    """A framework-level extent that is only known at run time."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "?"


# -- attribute schemas ---------------------------------------------------------

def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _int_list(x) -> bool:
    return isinstance(x, list) and all(_is_int(v) for v in x)


def _opt_int_list(x) -> bool:
    return isinstance(x, list) and all(v is None or _is_int(v) for v in x)


def _shape_list(x) -> bool:
    return isinstance(x, list) and all(_is_int(v) or (isinstance(v, str) and IDENT.match(v)) for v in x)


def _number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


_NO_DEFAULT = object()

# op -> {attr: (validator, default)}; _NO_DEFAULT marks a required attribute
ATTR_SCHEMAS = {
    **{op: {} for op in BINARY_OPS},
    **{op: {} for op in UNARY_OPS},
    "ReduceSum": {"axes": (_int_list, _NO_DEFAULT), "keep_dims": (lambda v: isinstance(v, bool), False)},
    "ReduceMax": {"axes": (_int_list, _NO_DEFAULT), "keep_dims": (lambda v: isinstance(v, bool), False)},
    "Transpose": {"perm": (_int_list, _NO_DEFAULT)},
    "Reshape": {"shape": (_shape_list, _NO_DEFAULT)},
    "Broadcast": {"shape": (_shape_list, _NO_DEFAULT), "broadcast_dims": (_int_list, None)},
    "Slice": {"begin": (_int_list, _NO_DEFAULT), "end": (_opt_int_list, _NO_DEFAULT), "strides": (_int_list, None)},
    "Pad": {"low": (_int_list, _NO_DEFAULT), "high": (_int_list, _NO_DEFAULT),
            "interior": (_int_list, None), "value": (_number, 0.0)},
    "Split": {"axis": (_is_int, _NO_DEFAULT), "num_splits": (_is_int, _NO_DEFAULT)},
    "Concat": {"axis": (_is_int, _NO_DEFAULT)},
    "MatMul": {},
    "Softmax": {"axis": (_is_int, -1)},
}

ARITY = {**{op: 2 for op in BINARY_OPS}, **{op: 1 for op in UNARY_OPS}, "MatMul": 2}


# -- parsing -------------------------------------------------------------------

def parse_graph(text: str) -> FrameworkGraph:
    """Parse and validate a JSON graph document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise GraphParseError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    return graph_from_json(doc)


def load_graph(path) -> FrameworkGraph:
    with open(path, encoding="utf-8") as f:
        return parse_graph(f.read())


def _schema(cond: bool, msg: str, node: str | None = None) -> None:
    if not cond:
        raise GraphValidationError(msg, node, "schema")


def graph_from_json(doc) -> FrameworkGraph:
    _schema(isinstance(doc, dict), "graph document must be a JSON object")
    unknown = set(doc) - {"name", "inputs", "outputs", "nodes"}
    _schema(not unknown, f"unknown top-level keys {sorted(unknown)}")
    name = doc.get("name", "graph")
    _schema(isinstance(name, str) and IDENT.match(name) is not None, f"bad graph name {name!r}")
    _schema(isinstance(doc.get("inputs"), list), "inputs must be a list")
    _schema(isinstance(doc.get("outputs"), list), "outputs must be a list")
    _schema(isinstance(doc.get("nodes", []), list), "nodes must be a list")
    inputs = []
    for t in doc["inputs"]:
        _schema(isinstance(t, dict) and set(t) <= {"id", "shape", "dtype"} and "id" in t and "shape" in t,
                f"bad input entry {t!r}")
        _schema(isinstance(t["id"], str), f"bad input id {t['id']!r}")
        _schema(isinstance(t["shape"], list) and all(
            (_is_int(d) and d >= 0) or (isinstance(d, str) and IDENT.match(d)) for d in t["shape"]),
            f"bad shape for input {t['id']}")
        inputs.append(TensorSpec(t["id"], tuple(t["shape"]), t.get("dtype", "f32")))
    nodes = []
    for n in doc.get("nodes", []):
        _schema(isinstance(n, dict) and "id" in n and "op" in n, f"bad node entry {n!r}")
        nid = n["id"]
        extra = set(n) - {"id", "op", "inputs", "attrs", "outputs"}
        _schema(not extra, f"unknown node keys {sorted(extra)}", str(nid))
        _schema(isinstance(nid, str), f"bad node id {nid!r}")
        ins = n.get("inputs", [])
        _schema(isinstance(ins, list) and all(isinstance(x, str) for x in ins), "inputs must be strings", nid)
        attrs = n.get("attrs", {})
        _schema(isinstance(attrs, dict), "attrs must be an object", nid)
        outs = n.get("outputs", [nid])
        _schema(isinstance(outs, list) and all(isinstance(x, str) for x in outs), "outputs must be strings", nid)
        nodes.append(FrameworkNode(nid, n["op"], tuple(ins), dict(attrs), tuple(outs)))
    outputs = doc["outputs"]
    _schema(all(isinstance(o, str) for o in outputs), "graph outputs must be tensor ids")
    g = FrameworkGraph(name, tuple(inputs), tuple(outputs), tuple(nodes))
    return validate(g)


# -- validation ----------------------------------------------------------------

class _Validator:
    def __init__(self, g: FrameworkGraph):
        self.g = g
        self.shapes: dict = {}
        self.symbols: set = set()

    def fail(self, node, rule, msg):
        raise GraphValidationError(msg, node, rule)

    def run(self) -> FrameworkGraph:
        g = self.g
        for t in g.inputs:
            if not IDENT.match(t.id):
                self.fail(None, "bad-id", f"invalid tensor id {t.id!r}")
            if t.id in self.shapes:
                self.fail(None, "duplicate-id", f"duplicate id {t.id}")
            if t.dtype != "f32":
                self.fail(None, "dtype", f"input {t.id}: only f32 is supported, got {t.dtype!r}")
            self.shapes[t.id] = tuple(t.shape)
            self.symbols.update(d for d in t.shape if isinstance(d, str))
        if not g.outputs:
            self.fail(None, "outputs", "graph must have at least one output")
        later = {o for n in g.nodes for o in n.outputs}
        node_ids = set()
        nodes = []
        for n in g.nodes:
            if not IDENT.match(n.id):
                self.fail(n.id, "bad-id", f"invalid node id {n.id!r}")
            if n.id in node_ids:
                self.fail(n.id, "duplicate-id", f"duplicate id {n.id}")
            node_ids.add(n.id)
            if n.op not in FRAMEWORK_OPS:
                self.fail(n.id, "unknown-op", f"unknown op {n.op!r}")
            for x in n.inputs:
                if x not in self.shapes:
                    if x in later:
                        self.fail(n.id, "cycle", f"consumes tensor {x} before it is defined (cycle or bad order)")
                    self.fail(n.id, "undefined-tensor", f"undefined tensor {x}")
            attrs = self._attrs(n)
            outs = self._outputs(n, attrs)
            shapes = self._infer(n, attrs, [self.shapes[x] for x in n.inputs])
            for o, s in zip(outs, shapes):
                if not IDENT.match(o):
                    self.fail(n.id, "bad-id", f"invalid tensor id {o!r}")
                if o in self.shapes:
                    self.fail(n.id, "duplicate-id", f"duplicate id {o}")
                self.shapes[o] = s
            nodes.append(FrameworkNode(n.id, n.op, n.inputs, attrs, outs))
        for o in g.outputs:
            if o not in self.shapes:
                self.fail(None, "undefined-tensor", f"undefined tensor {o}")
        return FrameworkGraph(g.name, g.inputs, g.outputs, tuple(nodes))

    def _attrs(self, n: FrameworkNode) -> dict:
        schema = ATTR_SCHEMAS[n.op]
        unknown = set(n.attrs) - set(schema)
        if unknown:
            self.fail(n.id, "bad-attr", f"unknown attrs {sorted(unknown)} for {n.op}")
        out = {}
        for key, (check, default) in schema.items():
            if key not in n.attrs:
                if default is _NO_DEFAULT:
                    self.fail(n.id, "bad-attr", f"{n.op} requires attr {key!r}")
                out[key] = default
            elif not check(n.attrs[key]):
                self.fail(n.id, "bad-attr", f"bad value for attr {key!r}: {n.attrs[key]!r}")
            else:
                out[key] = n.attrs[key]
        return out

    def _outputs(self, n: FrameworkNode, attrs: dict) -> tuple:
        want = attrs["num_splits"] if n.op == "Split" else 1
        if n.op == "Split" and (not _is_int(want) or want < 2):
            self.fail(n.id, "bad-attr", "Split num_splits must be >= 2")
        if len(n.outputs) != want:
            if n.op == "Split":
                self.fail(n.id, "arity", f"Split arity mismatch: num_splits={want} but {len(n.outputs)} outputs")
            self.fail(n.id, "arity", f"{n.op} produces one output, {len(n.outputs)} declared")
        return n.outputs

    def _axis(self, n, axis: int, rank: int, what: str = "axis") -> int:
        if not -rank <= axis < rank:
            self.fail(n.id, "bad-attr", f"{what} {axis} out of range for rank {rank}")
        return axis % rank

    def _infer(self, n: FrameworkNode, attrs: dict, shapes: list) -> list:
        op = n.op
        want = ARITY.get(op)
        if want is not None and len(shapes) != want:
            self.fail(n.id, "arity", f"{op} expects {want} inputs, got {len(shapes)}")
        if op not in ARITY and op != "Concat" and len(shapes) != 1:
            self.fail(n.id, "arity", f"{op} expects 1 input, got {len(shapes)}")
        if op in BINARY_OPS:
            return [self._broadcast_shapes(n, shapes[0], shapes[1])]
        if op in UNARY_OPS:
            return [shapes[0]]
        s = shapes[0] if shapes else ()
        rank = len(s)
        if op in ("ReduceSum", "ReduceMax"):
            if not attrs["axes"]:
                self.fail(n.id, "bad-attr", "reduce axes must be non-empty")
            axes = sorted({self._axis(n, a, rank) for a in attrs["axes"]})
            if len(axes) != len(attrs["axes"]):
                self.fail(n.id, "bad-attr", "duplicate reduce axes")
            attrs["axes"] = axes
            if attrs["keep_dims"]:
                return [tuple(1 if i in axes else d for i, d in enumerate(s))]
            return [tuple(d for i, d in enumerate(s) if i not in axes)]
        if op == "Transpose":
            perm = attrs["perm"]
            if sorted(perm) != list(range(rank)):
                self.fail(n.id, "rank-mismatch", f"perm {perm} is not a permutation of rank {rank}")
            return [tuple(s[p] for p in perm)]
        if op == "Softmax":
            if rank == 0:
                self.fail(n.id, "rank-mismatch", "Softmax needs rank >= 1")
            attrs["axis"] = self._axis(n, attrs["axis"], rank)
            return [s]
        if op == "Reshape":
            return [self._reshape(n, s, attrs["shape"])]
        if op == "Broadcast":
            return [self._broadcast(n, s, attrs)]
        if op == "Slice":
            return [self._slice(n, s, attrs)]
        if op == "Pad":
            return [self._pad(n, s, attrs)]
        if op == "Split":
            axis = attrs["axis"] = self._axis(n, attrs["axis"], rank)
            k = attrs["num_splits"]
            d = s[axis]
            if _is_int(d) and d % k:
                self.fail(n.id, "bad-attr", f"Split of extent {d} into {k} is not even")
            chunk = d // k if _is_int(d) else Unknown()
            return [tuple(chunk if i == axis else x for i, x in enumerate(s))] * k
        if op == "Concat":
            if not shapes:
                self.fail(n.id, "arity", "Concat needs at least one input")
            if rank == 0:
                self.fail(n.id, "rank-mismatch", "Concat needs rank >= 1")
            axis = attrs["axis"] = self._axis(n, attrs["axis"], rank)
            for t in shapes[1:]:
                if len(t) != rank:
                    self.fail(n.id, "rank-mismatch", f"Concat inputs of rank {rank} and {len(t)}")
                for i in range(rank):
                    if i != axis and _is_int(t[i]) and _is_int(s[i]) and t[i] != s[i]:
                        self.fail(n.id, "shape-mismatch", f"Concat extents {s[i]} and {t[i]} on axis {i}")
            along = [t[axis] for t in shapes]
            total = sum(along) if all(_is_int(d) for d in along) else Unknown()
            return [tuple(total if i == axis else x for i, x in enumerate(s))]
        if op == "MatMul":
            a, b = shapes
            if len(a) != 2 or len(b) != 2:
                self.fail(n.id, "rank-mismatch", "MatMul operands must be rank-2")
            if _is_int(a[1]) and _is_int(b[0]) and a[1] != b[0]:
                self.fail(n.id, "shape-mismatch", f"MatMul contraction extents {a[1]} and {b[0]}")
            return [(a[0], b[1])]
        raise AssertionError(op)  # pragma: no cover

    def _broadcast_shapes(self, n, a, b) -> tuple:
        if len(a) < len(b):
            a, b = b, a
        b = (None,) * (len(a) - len(b)) + tuple(b)
        out = []
        for x, y in zip(a, b):
            if y is None or x == y or y == 1:
                out.append(x)
            elif x == 1:
                out.append(y)
            elif _is_int(x) and _is_int(y):
                self.fail(n.id, "shape-mismatch", f"cannot broadcast extents {x} and {y}")
            elif _is_int(x) or _is_int(y):
                out.append(x if _is_int(x) else y)
            else:
                out.append(Unknown())
        return tuple(out)

    def _reshape(self, n, s, entries) -> tuple:
        inferred = [e for e in entries if e == -1 or (isinstance(e, str) and e not in self.symbols)]
        if len(inferred) > 1:
            self.fail(n.id, "bad-attr", "Reshape can infer at most one extent")
        if any(_is_int(e) and e < -1 for e in entries):
            self.fail(n.id, "bad-attr", "Reshape extents must be >= 0 or -1")
        if inferred and any(e == 0 for e in entries):
            self.fail(n.id, "bad-attr", "Reshape cannot infer an extent next to a zero extent")
        out = []
        for j, e in enumerate(entries):
            if not (e == -1 or (isinstance(e, str) and e not in self.symbols)):
                out.append(e)
                continue
            rest = [x for i, x in enumerate(entries) if i != j]
            if all(_is_int(d) for d in s) and all(_is_int(x) for x in rest):
                total = 1
                for d in s:
                    total *= d
                prod = 1
                for x in rest:
                    prod *= x
                if total % prod:
                    self.fail(n.id, "shape-mismatch", f"cannot reshape {list(s)} to {entries}")
                out.append(total // prod)
            else:
                out.append(e if isinstance(e, str) else Unknown())
            if isinstance(e, str):
                self.symbols.add(e)
        if all(_is_int(d) for d in s) and all(_is_int(d) for d in out):
            a = b = 1
            for d in s:
                a *= d
            for d in out:
                b *= d
            if a != b:
                self.fail(n.id, "shape-mismatch", f"cannot reshape {list(s)} to {entries}")
        return tuple(out)

    def _broadcast(self, n, s, attrs) -> tuple:
        target = attrs["shape"]
        for e in target:
            if isinstance(e, str) and e not in self.symbols:
                self.fail(n.id, "bad-attr", f"unknown symbol {e!r} in Broadcast shape")
            if _is_int(e) and e < 0:
                self.fail(n.id, "bad-attr", "Broadcast extents must be >= 0")
        r = len(target)
        bd = attrs["broadcast_dims"]
        if bd is None:
            bd = list(range(r - len(s), r))
        if len(bd) != len(s) or any(not 0 <= x < r for x in bd) or any(a >= b for a, b in zip(bd, bd[1:])):
            self.fail(n.id, "rank-mismatch", f"broadcast_dims {bd} invalid for rank {len(s)} -> {r}")
        attrs["broadcast_dims"] = list(bd)
        for i, x in enumerate(s):
            y = target[bd[i]]
            if _is_int(x) and _is_int(y) and x not in (1, y):
                self.fail(n.id, "shape-mismatch", f"cannot broadcast extent {x} to {y}")
        return tuple(target)

    def _slice(self, n, s, attrs) -> tuple:
        rank = len(s)
        begin, end = attrs["begin"], attrs["end"]
        strides = attrs["strides"] if attrs["strides"] is not None else [1] * rank
        attrs["strides"] = list(strides)
        if not (len(begin) == len(end) == len(strides) == rank):
            self.fail(n.id, "rank-mismatch", f"Slice attrs must have length {rank}")
        out = []
        for d, b, e, st in zip(s, begin, end, strides):
            if b < 0 or (e is not None and e < 0) or st < 1:
                self.fail(n.id, "bad-attr", "Slice begin/end must be >= 0 and strides >= 1")
            if _is_int(d) and (b > d or (e is not None and e > d)):
                self.fail(n.id, "bad-attr", f"Slice bounds out of range for extent {d}")
            lim = d if e is None else e
            if _is_int(lim):
                out.append(max(0, -(-(lim - b) // st)))
            else:
                out.append(Unknown())
        return tuple(out)

    def _pad(self, n, s, attrs) -> tuple:
        rank = len(s)
        interior = attrs["interior"] if attrs["interior"] is not None else [0] * rank
        attrs["interior"] = list(interior)
        attrs["value"] = float(attrs["value"])
        lo, hi = attrs["low"], attrs["high"]
        if not (len(lo) == len(hi) == len(interior) == rank):
            self.fail(n.id, "rank-mismatch", f"Pad attrs must have length {rank}")
        if any(v < 0 for v in (*lo, *hi, *interior)):
            self.fail(n.id, "bad-attr", "Pad amounts must be >= 0")
        out = []
        for d, a, b, i in zip(s, lo, hi, interior):
            out.append(a + b + d + max(d - 1, 0) * i if _is_int(d) else Unknown())
        return tuple(out)


def validate(g: FrameworkGraph) -> FrameworkGraph:
    """Validate ``g``; returns an equivalent graph with attrs normalized and defaults filled."""
    return _Validator(g).run()


def tensor_shapes(g: FrameworkGraph) -> dict:
    """Framework-level shapes of every tensor (``Unknown`` for run-time-only extents)."""
    v = _Validator(g)
    v.run()
    return v.shapes
