"""Eager node-by-node reference interpreter over framework and DHLO graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import semantics as sem
from .dhlo.ir import DhloGraph, Sym, eval_scalar_fn
from .errors import ExecutionError, ShapeMismatchError
from .frontend.graph import BINARY_OPS, UNARY_OPS, FrameworkGraph

ALIGNMENT = 16


def aligned_bytes(n_elements: int) -> int:
    nbytes = 4 * n_elements
    return -(-nbytes // ALIGNMENT) * ALIGNMENT


@dataclass
class EagerStats:
    op_count: int = 0
    peak_bytes: int = 0


class _Memory:
    """Tracks live intermediate bytes: each result is freed after its last use."""

    def __init__(self, last_use: dict, keep: set):
        self.last_use = last_use
        self.keep = keep
        self.live: dict = {}
        self.current = 0
        self.peak = 0

    def define(self, tid: str, arr: np.ndarray) -> None:
        nbytes = aligned_bytes(arr.size)
        self.live[tid] = nbytes
        self.current += nbytes
        self.peak = max(self.peak, self.current)

    def release_after(self, step: int) -> None:
        for tid in [t for t, last in self.last_use.items() if last == step]:
            if tid in self.live and tid not in self.keep:
                self.current -= self.live.pop(tid)


def _as_f32(x) -> np.ndarray:
    return np.require(np.asarray(x, dtype=np.float32), requirements="C")


def _bind_inputs(specs, inputs: dict, symbols: dict, describe) -> dict:
    env = {}
    for spec in specs:
        vid, shape = spec
        if vid not in inputs:
            raise ExecutionError(f"missing binding for input {vid}")
        arr = _as_f32(inputs[vid])
        if arr.ndim != len(shape):
            raise ShapeMismatchError(f"input {vid}: expected rank {len(shape)}, got {arr.ndim}")
        for axis, d in enumerate(shape):
            actual = arr.shape[axis]
            if isinstance(d, int):
                if d != actual:
                    raise ShapeMismatchError(f"input {vid}[{axis}]: expected {d}, got {actual}")
                continue
            key = d if isinstance(d, str) else d.id
            if symbols.setdefault(key, actual) != actual:
                raise ShapeMismatchError(
                    f"inconsistent symbol binding: {describe(d)} is {symbols[key]} and {actual} (input {vid}[{axis}])")
        env[vid] = arr
    return env


def _last_uses(steps) -> dict:
    last = {}
    for i, ins in enumerate(steps):
        for x in ins:
            last[x] = i
    return last


# -- framework level -------------------------------------------------------------

def _framework_node(node, args: list, names: dict) -> list:
    op, a = node.op, node.attrs
    if op in BINARY_OPS:
        x, y = args
        try:
            np.broadcast_shapes(x.shape, y.shape)
        except ValueError:
            raise ShapeMismatchError(f"cannot broadcast {list(x.shape)} with {list(y.shape)}") from None
        return [sem.elementwise(BINARY_OPS[op], x, y)]
    if op in UNARY_OPS:
        return [sem.elementwise(UNARY_OPS[op], args[0])]
    x = args[0]
    if op in ("ReduceSum", "ReduceMax"):
        r = sem.reduce(x, a["axes"], "sum" if op == "ReduceSum" else "max")
        if a["keep_dims"]:
            r = r.reshape([1 if i in a["axes"] else d for i, d in enumerate(x.shape)])
        return [r]
    if op == "Transpose":
        return [sem.transpose(x, a["perm"])]
    if op == "Softmax":
        axis = a["axis"]
        kept = [i for i in range(x.ndim) if i != axis]
        m = sem.broadcast_in_dim(sem.reduce(x, [axis], "max"), x.shape, kept)
        e = sem.elementwise("exp", sem.elementwise("sub", x, m))
        s = sem.broadcast_in_dim(sem.reduce(e, [axis], "sum"), x.shape, kept)
        return [sem.elementwise("div", e, s)]
    if op == "Reshape":
        entries = a["shape"]
        dims = [None if (e == -1 or (isinstance(e, str) and e not in names)) else
                (names[e] if isinstance(e, str) else e) for e in entries]
        if None in dims:
            j = dims.index(None)
            rest = int(np.prod([d for i, d in enumerate(dims) if i != j], dtype=np.int64))
            if rest == 0 or x.size % rest:
                raise ShapeMismatchError(f"cannot reshape {list(x.shape)} to {entries}")
            dims[j] = x.size // rest
            if isinstance(entries[j], str):
                names[entries[j]] = dims[j]
        return [sem.reshape(x, dims)]
    if op == "Broadcast":
        shape = [names[e] if isinstance(e, str) else e for e in a["shape"]]
        return [sem.broadcast_in_dim(x, shape, a["broadcast_dims"])]
    if op == "Slice":
        limit = [x.shape[i] if e is None else e for i, e in enumerate(a["end"])]
        return [sem.dynamic_slice(x, a["begin"], limit, a["strides"])]
    if op == "Pad":
        return [sem.dynamic_pad(x, a["value"], a["low"], a["high"], a["interior"])]
    if op == "Split":
        axis, n = a["axis"], a["num_splits"]
        if x.shape[axis] % n:
            raise ShapeMismatchError(f"Split of extent {x.shape[axis]} into {n} is not even")
        chunk = x.shape[axis] // n
        out = []
        for k in range(n):
            idx = [slice(None)] * x.ndim
            idx[axis] = slice(k * chunk, (k + 1) * chunk)
            out.append(np.ascontiguousarray(x[tuple(idx)]))
        return out
    if op == "Concat":
        return [sem.concat(args, a["axis"])]
    if op == "MatMul":
        return [sem.matmul(args[0], args[1])]
    raise ExecutionError(f"no eager semantics for {op}")  # pragma: no cover


def eval_framework(g: FrameworkGraph, inputs: dict):
    names: dict = {}
    env = _bind_inputs([(t.id, t.shape) for t in g.inputs], inputs, names, lambda d: d)
    last = _last_uses([n.inputs for n in g.nodes] + [tuple(g.outputs)])
    mem = _Memory(last, set(g.outputs))
    stats = EagerStats()
    for i, node in enumerate(g.nodes):
        try:
            results = _framework_node(node, [env[x] for x in node.inputs], names)
        except ExecutionError as e:
            raise type(e)(f"node {node.id}: {e}") from None
        stats.op_count += 1
        for tid, arr in zip(node.outputs, results):
            env[tid] = arr
            mem.define(tid, arr)
        mem.release_after(i)
    stats.peak_bytes = mem.peak
    return [env[o] for o in g.outputs], stats


# -- DHLO level --------------------------------------------------------------------

def eval_dhlo_op(op, args: list) -> np.ndarray:
    """Concrete semantics of one DHLO op (shape ops return int64 arrays)."""
    k = op.kind
    if k == "constant":
        dtype = np.int64 if op.dtype == "i64" else np.float32
        return np.array(op.attrs["value"], dtype=dtype).reshape([int(d) for d in op.shape])
    if k == "shape_of":
        return np.array(args[0].shape, dtype=np.int64)
    if k == "extract_dim":
        return np.array(args[0][op.attrs["index"]], dtype=np.int64)
    if k == "scalar_arith":
        try:
            return np.array(eval_scalar_fn(op.attrs["fn"], int(args[0]), int(args[1])), dtype=np.int64)
        except (ValueError, ZeroDivisionError) as e:
            raise ShapeMismatchError(str(e)) from None
    if k == "from_elements":
        return np.array([int(a) for a in args], dtype=np.int64)
    if k in sem._BINARY or k in sem._UNARY:
        if any(a.shape != args[0].shape for a in args):
            raise ShapeMismatchError(f"{k} operands have shapes {[list(a.shape) for a in args]}")
        return sem.elementwise(k, *args)
    if k == "reduce":
        return sem.reduce(args[0], op.attrs["axes"], op.attrs["mode"])
    if k == "transpose":
        return sem.transpose(args[0], op.attrs["perm"])
    if k == "concat":
        return sem.concat(args, op.attrs["axis"])
    if k == "matmul":
        return sem.matmul(args[0], args[1])
    return sem.eval_dynamic_op(k, args, op.attrs)


def eval_dhlo(g: DhloGraph, inputs: dict, symbols: dict | None = None):
    """Evaluate ``g``; result shapes are checked against the (symbolic) annotations.

    ``symbols`` collects the concrete value bound to every symbol id.
    """
    symbols = {} if symbols is None else symbols
    env = _bind_inputs([(v.id, v.shape) for v in g.inputs], inputs, symbols, g.symbol_name)
    last = _last_uses([op.inputs for op in g.ops] + [tuple(g.outputs)])
    mem = _Memory(last, set(g.outputs))
    stats = EagerStats()
    for i, op in enumerate(g.ops):
        try:
            result = eval_dhlo_op(op, [env[x] for x in op.inputs])
        except ExecutionError as e:
            raise type(e)(f"op %{op.id}: {e}") from None
        if op.is_data_op:
            stats.op_count += 1
            if len(op.shape) != result.ndim:
                raise ShapeMismatchError(f"op %{op.id}: rank {result.ndim} differs from annotation")
            for axis, d in enumerate(op.shape):
                actual = result.shape[axis]
                expect = symbols.setdefault(d.id, actual) if isinstance(d, Sym) else d
                if expect != actual:
                    raise ShapeMismatchError(
                        f"op %{op.id}: axis {axis} is {actual}, annotation {d!r} requires {expect}")
            mem.define(op.id, result)
        env[op.id] = result
        mem.release_after(i)
    stats.peak_bytes = mem.peak
    return [env[o] for o in g.outputs], stats


def eval_eager(g, inputs: dict):
    """Run the oracle on a :class:`FrameworkGraph` or :class:`DhloGraph`; returns (outputs, stats)."""
    if isinstance(g, FrameworkGraph):
        return eval_framework(g, inputs)
    return eval_dhlo(g, inputs)


def eval_dynamic_ops(op, operands: list) -> np.ndarray:
    return eval_dhlo_op(op, operands)
