"""Random well-formed framework graphs for differential testing.

Graphs are built node by node.  Operands are only ever paired when their
extents are provably compatible (identical, or a literal 1), so every graph
is valid for every binding of its symbols.
"""

from __future__ import annotations

import numpy as np

from .frontend.graph import FrameworkGraph, Unknown, graph_from_json, tensor_shapes

SYMBOLS = ("A", "B", "C")
CONSTS = (1, 2, 3, 4)
UNARY = ("Exp", "Tanh", "Neg")
BINARY = ("Add", "Sub", "Mul", "Div", "Maximum")


def _declarable(shape) -> bool:
    return all(not isinstance(d, Unknown) for d in shape)


def _compatible(a, b) -> bool:
    if len(a) != len(b):
        return False
    return all(x == y and not isinstance(x, Unknown) or x == 1 or y == 1 for x, y in zip(a, b))


class _Builder:
    def __init__(self, rng: np.random.Generator, max_nodes: int, max_rank: int):
        self.rng = rng
        self.max_nodes = max_nodes
        self.max_rank = max_rank
        self.inputs: list = []
        self.nodes: list = []
        self.shapes: dict = {}
        self.n = 0

    def choice(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def dim(self):
        return self.choice(SYMBOLS) if self.rng.random() < 0.6 else self.choice(CONSTS)

    def new_input(self, shape) -> str:
        tid = f"in{len(self.inputs)}"
        self.inputs.append({"id": tid, "shape": list(shape)})
        self.shapes[tid] = tuple(shape)
        return tid

    def doc(self, outputs) -> dict:
        return {"name": "random", "inputs": self.inputs, "outputs": outputs, "nodes": self.nodes}

    def add(self, op: str, inputs: list, outputs=None, **attrs) -> bool:
        nid = f"n{self.n}"
        node = {"id": nid, "op": op, "inputs": inputs, "attrs": attrs}
        if outputs:
            node["outputs"] = [f"{nid}_{o}" for o in range(outputs)]
        self.nodes.append(node)
        try:
            shapes = tensor_shapes(graph_from_json(self.doc([nid if not outputs else node["outputs"][0]])))
        except Exception:
            self.nodes.pop()
            return False
        rank_ok = all(len(shapes[t]) <= self.max_rank for t in node.get("outputs", [nid]))
        if not rank_ok:
            self.nodes.pop()
            return False
        self.n += 1
        self.shapes = dict(shapes)
        return True

    def pick(self, pred=lambda s: True):
        cands = [t for t, s in self.shapes.items() if pred(s)]
        return self.choice(cands) if cands else None

    def step(self) -> None:
        kind = self.choice(("unary", "binary", "binary", "reduce", "transpose", "softmax", "reshape",
                            "broadcast", "slice", "pad", "concat", "split", "matmul"))
        t = self.pick()
        s = self.shapes[t]
        r = len(s)
        rng = self.rng
        if kind == "unary":
            self.add(self.choice(UNARY), [t])
        elif kind == "binary":
            partners = [u for u, us in self.shapes.items() if _compatible(s, us)]
            if partners and rng.random() < 0.7:
                u = self.choice(partners)
            elif _declarable(s):
                u = self.new_input([1 if rng.random() < 0.25 else d for d in s])
            else:
                return
            if rng.random() < 0.5:
                t, u = u, t
            self.add(self.choice(BINARY), [t, u])
        elif kind == "reduce" and r >= 1:
            k = int(rng.integers(1, r + 1))
            axes = sorted(rng.choice(r, size=k, replace=False).tolist())
            self.add(self.choice(("ReduceSum", "ReduceMax")), [t], axes=axes, keep_dims=bool(rng.random() < 0.5))
        elif kind == "transpose" and r >= 2:
            self.add("Transpose", [t], perm=rng.permutation(r).tolist())
        elif kind == "softmax" and r >= 1:
            self.add("Softmax", [t], axis=int(rng.integers(r)))
        elif kind == "reshape" and r >= 1:
            if r >= 2 and isinstance(s[0], int) and s[0] >= 1 and rng.random() < 0.5:
                self.add("Reshape", [t], shape=[s[0], -1])
            else:
                self.add("Reshape", [t], shape=[-1])
        elif kind == "broadcast" and r < self.max_rank and _declarable(s):
            self.add("Broadcast", [t], shape=[self.choice((2, 3, "A"))] + list(s))
        elif kind == "slice" and r >= 1:
            begin = [int(rng.integers(0, 2)) if isinstance(d, int) and d >= 1 else 0 for d in s]
            strides = [int(rng.integers(1, 3)) for _ in s]
            self.add("Slice", [t], begin=begin, end=[None] * r, strides=strides)
        elif kind == "pad" and r >= 1:
            self.add("Pad", [t], low=rng.integers(0, 3, r).tolist(), high=rng.integers(0, 3, r).tolist(),
                     interior=rng.integers(0, 2, r).tolist(), value=float(np.round(rng.uniform(-1, 1), 2)))
        elif kind == "concat" and r >= 1 and _declarable(s):
            axis = int(rng.integers(r))
            other = list(s)
            other[axis] = self.dim()
            self.add("Concat", [t, self.new_input(other)], axis=axis)
        elif kind == "split" and r >= 1:
            axes = [a for a, d in enumerate(s) if isinstance(d, int) and d > 0 and d % 2 == 0]
            if axes:
                self.add("Split", [t], outputs=2, axis=self.choice(axes), num_splits=2)
        elif kind == "matmul" and r == 2 and not isinstance(s[1], Unknown):
            self.add("MatMul", [t, self.new_input([s[1], self.dim()])])

    def build(self) -> FrameworkGraph:
        r = int(self.rng.integers(1, self.max_rank + 1))
        self.new_input([self.dim() for _ in range(r)])
        target = int(self.rng.integers(2, self.max_nodes + 1))
        attempts = 0
        while self.n < target and attempts < 20 * self.max_nodes:
            attempts += 1
            self.step()
        produced = [t for t in self.shapes if not t.startswith("in")]
        if not produced:
            self.add("Tanh", [self.inputs[0]["id"]])
            produced = [t for t in self.shapes if not t.startswith("in")]
        outputs = [produced[-1]]
        if len(produced) > 2 and self.rng.random() < 0.4:
            extra = self.choice(produced[:-1])
            if extra not in outputs:
                outputs.append(extra)
        return graph_from_json(self.doc(outputs))


def random_graph(seed: int, max_nodes: int = 12, max_rank: int = 3) -> FrameworkGraph:
    """A valid graph with at most ``max_nodes`` nodes and tensor ranks at most ``max_rank``."""
    rng = np.random.default_rng(seed)
    return _Builder(rng, max_nodes, max_rank).build()


def graph_symbols(g: FrameworkGraph) -> list:
    seen = []
    for t in g.inputs:
        for d in t.shape:
            if isinstance(d, str) and d not in seen:
                seen.append(d)
    return seen


def random_binding(g: FrameworkGraph, rng: np.random.Generator, high: int = 6) -> dict:
    return {s: int(rng.integers(0, high + 1)) for s in graph_symbols(g)}


def make_inputs(g: FrameworkGraph, binding: dict, rng: np.random.Generator) -> dict:
    out = {}
    for t in g.inputs:
        shape = tuple(binding[d] if isinstance(d, str) else d for d in t.shape)
        out[t.id] = np.asarray(rng.uniform(-2.0, 2.0, size=shape), dtype=np.float32).reshape(shape)
    return out
