"""Structural verifier for DHLO graphs.  Never mutates; returns every violation found."""

from __future__ import annotations

from dataclasses import dataclass

from .ir import (
    ALL_KINDS, ELEMENTWISE_BINARY, ELEMENTWISE_UNARY, MAX_CONST_DIM, REDUCE_MODES, SCALAR_FNS,
    SHAPE_OPS, DhloGraph, DhloOp, Sym, format_shape,
)


@dataclass(frozen=True)
class Diagnostic:
    where: str
    message: str

    def __str__(self) -> str:
        return f"%{self.where}: {self.message}" if self.where else self.message


def _conflict(a, b) -> bool:
    return not isinstance(a, Sym) and not isinstance(b, Sym) and a != b


class _Verifier:
    def __init__(self, g: DhloGraph):
        self.g = g
        self.diags: list[Diagnostic] = []
        self.types: dict[str, tuple] = {}

    def err(self, where: str, msg: str) -> None:
        self.diags.append(Diagnostic(where, msg))

    def run(self) -> list:
        g = self.g
        later = {op.id for op in g.ops}
        for v in g.inputs:
            if v.id in self.types:
                self.err(v.id, "duplicate definition")
            if v.dtype != "f32":
                self.err(v.id, "graph inputs must be f32")
            self.types[v.id] = (tuple(v.shape), v.dtype)
            self._check_dims(v.id, v.shape)
        for op in g.ops:
            later.discard(op.id)
            ok = True
            for a in op.inputs:
                if a not in self.types:
                    if a in later or a == op.id:
                        self.err(op.id, f"dominance violation: uses %{a} before its definition")
                    else:
                        self.err(op.id, f"undefined value %{a}")
                    ok = False
            if op.id in self.types:
                self.err(op.id, "duplicate definition")
            self._check_dims(op.id, op.shape)
            if op.kind not in ALL_KINDS:
                self.err(op.id, f"unknown op kind {op.kind!r}")
            elif ok:
                self._check_op(op)
            self.types[op.id] = (tuple(op.shape), op.dtype)
        for o in g.outputs:
            if o not in self.types:
                self.err("", f"output %{o} is not defined")
            elif self.types[o][1] != "f32":
                self.err(o, "graph outputs must be f32 tensors")
        used = g.used_symbols()
        for s in sorted(used):
            if s.id not in g.symbols:
                self.err("", f"symbol {s!r} missing from the symbol table")
        return self.diags

    def _check_dims(self, where, shape) -> None:
        for d in shape:
            if isinstance(d, Sym):
                continue
            if isinstance(d, bool) or not isinstance(d, int) or d < 0 or d > MAX_CONST_DIM:
                self.err(where, f"invalid constant dimension {d!r}")

    def _shape(self, vid):
        return self.types[vid][0]

    def _dtype(self, vid):
        return self.types[vid][1]

    def _expect_index(self, op: DhloOp, vid: str, length: int, what: str) -> None:
        shape, dtype = self.types[vid]
        if dtype != "i64":
            self.err(op.id, f"{what} operand must be an i64 tensor")
        if len(shape) != 1:
            self.err(op.id, f"{what} index operand must be rank-1")
        elif shape[0] != length:
            self.err(op.id, f"{what} index operand must have length {length}, got {format_shape(shape)}")

    def _expect_f32(self, op: DhloOp) -> None:
        if op.dtype != "f32":
            self.err(op.id, "result must be f32")
        for a in op.data_inputs:
            if self._dtype(a) != "f32":
                self.err(op.id, f"data operand %{a} must be f32")

    def _arity(self, op: DhloOp, n: int) -> bool:
        if len(op.inputs) != n:
            self.err(op.id, f"{op.kind} expects {n} operands, got {len(op.inputs)}")
            return False
        return True

    def _check_op(self, op: DhloOp) -> None:
        k = op.kind
        rank = len(op.shape)
        if k in ELEMENTWISE_BINARY or k in ELEMENTWISE_UNARY:
            if not self._arity(op, 2 if k in ELEMENTWISE_BINARY else 1):
                return
            self._expect_f32(op)
            for a in op.inputs:
                s = self._shape(a)
                if len(s) != rank:
                    self.err(op.id, f"operand %{a} rank {len(s)} differs from result rank {rank}")
                elif any(_conflict(x, y) for x, y in zip(s, op.shape)):
                    self.err(op.id, f"operand %{a} shape {format_shape(s)} conflicts with result {format_shape(op.shape)}")
        elif k == "reduce":
            if not self._arity(op, 1):
                return
            self._expect_f32(op)
            s = self._shape(op.inputs[0])
            axes = op.attrs.get("axes")
            if op.attrs.get("mode") not in REDUCE_MODES:
                self.err(op.id, "reduce mode must be sum or max")
            if not isinstance(axes, list) or sorted(set(axes)) != axes or any(not 0 <= a < len(s) for a in axes):
                self.err(op.id, "reduce axes must be sorted, unique and within rank")
            elif rank != len(s) - len(axes):
                self.err(op.id, "reduce result rank mismatch")
        elif k == "transpose":
            if not self._arity(op, 1):
                return
            self._expect_f32(op)
            s = self._shape(op.inputs[0])
            perm = op.attrs.get("perm")
            if not isinstance(perm, list) or sorted(perm) != list(range(len(s))) or rank != len(s):
                self.err(op.id, "transpose perm must be a permutation of the operand axes")
        elif k == "dynamic_broadcast_in_dim":
            if not self._arity(op, 2):
                return
            self._expect_f32(op)
            s = self._shape(op.inputs[0])
            self._expect_index(op, op.inputs[1], rank, "output shape")
            bd = op.attrs.get("broadcast_dims")
            if (not isinstance(bd, list) or len(bd) != len(s) or any(not 0 <= x < rank for x in bd)
                    or any(a >= b for a, b in zip(bd, bd[1:]))):
                self.err(op.id, "broadcast_dims must be increasing result axes, one per operand axis")
        elif k == "dynamic_reshape":
            if not self._arity(op, 2):
                return
            self._expect_f32(op)
            self._expect_index(op, op.inputs[1], rank, "output shape")
        elif k == "dynamic_slice":
            if not self._arity(op, 4):
                return
            self._expect_f32(op)
            r = len(self._shape(op.inputs[0]))
            for vid, what in zip(op.inputs[1:], ("start_indices", "limit_indices", "strides")):
                self._expect_index(op, vid, r, what)
            if rank != r:
                self.err(op.id, "slice result rank must equal operand rank")
        elif k == "dynamic_pad":
            if not self._arity(op, 5):
                return
            self._expect_f32(op)
            r = len(self._shape(op.inputs[0]))
            if self._shape(op.inputs[1]) != ():
                self.err(op.id, "pad_value must be a rank-0 tensor")
            for vid, what in zip(op.inputs[2:], ("low", "high", "interior")):
                self._expect_index(op, vid, r, what)
            if rank != r:
                self.err(op.id, "pad result rank must equal operand rank")
        elif k == "concat":
            if not op.inputs:
                self.err(op.id, "concat needs at least one operand")
                return
            self._expect_f32(op)
            axis = op.attrs.get("axis")
            if not isinstance(axis, int) or not 0 <= axis < max(rank, 1) or rank == 0:
                self.err(op.id, "concat axis out of range")
                return
            for a in op.inputs:
                s = self._shape(a)
                if len(s) != rank:
                    self.err(op.id, f"concat operand %{a} rank mismatch")
                elif any(_conflict(x, y) for i, (x, y) in enumerate(zip(s, op.shape)) if i != axis):
                    self.err(op.id, f"concat operand %{a} conflicts with result on a non-concat axis")
        elif k == "matmul":
            if not self._arity(op, 2):
                return
            self._expect_f32(op)
            a, b = (self._shape(x) for x in op.inputs)
            if len(a) != 2 or len(b) != 2 or rank != 2:
                self.err(op.id, "matmul operands and result must be rank-2")
            elif _conflict(a[1], b[0]):
                self.err(op.id, f"matmul contraction dims {a[1]} and {b[0]} cannot unify")
        elif k == "constant":
            value = op.attrs.get("value")
            if op.inputs:
                self.err(op.id, "constant takes no operands")
            if any(isinstance(d, Sym) for d in op.shape):
                self.err(op.id, "constant must have a static shape")
            elif not isinstance(value, list) or len(value) != _prod(op.shape):
                self.err(op.id, "constant literal length does not match its shape")
            if op.dtype not in ("f32", "i64"):
                self.err(op.id, "constant dtype must be f32 or i64")
        elif k in SHAPE_OPS:
            self._check_shape_op(op)

    def _check_shape_op(self, op: DhloOp) -> None:
        if op.dtype != "i64":
            self.err(op.id, "shape computation results must be i64")
        k = op.kind
        if k == "shape_of":
            if self._arity(op, 1) and op.shape != (len(self._shape(op.inputs[0])),):
                self.err(op.id, "shape_of result must be rank-1 with one entry per operand axis")
        elif k == "extract_dim":
            if not self._arity(op, 1):
                return
            s, dt = self.types[op.inputs[0]]
            idx = op.attrs.get("index")
            if dt != "i64" or len(s) != 1:
                self.err(op.id, "extract_dim operand must be a rank-1 i64 tensor")
            elif not isinstance(idx, int) or isinstance(s[0], Sym) or not 0 <= idx < s[0]:
                self.err(op.id, "extract_dim index out of range")
            if op.shape != ():
                self.err(op.id, "extract_dim result must be rank-0")
        elif k == "scalar_arith":
            if not self._arity(op, 2):
                return
            if op.attrs.get("fn") not in SCALAR_FNS:
                self.err(op.id, f"unknown scalar fn {op.attrs.get('fn')!r}")
            for a in op.inputs:
                if self.types[a] != ((), "i64"):
                    self.err(op.id, f"scalar_arith operand %{a} must be a rank-0 i64 tensor")
            if op.shape != ():
                self.err(op.id, "scalar_arith result must be rank-0")
        elif k == "from_elements":
            for a in op.inputs:
                if self.types[a] != ((), "i64"):
                    self.err(op.id, f"from_elements operand %{a} must be a rank-0 i64 tensor")
            if op.shape != (len(op.inputs),):
                self.err(op.id, "from_elements result length mismatch")


def _prod(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


def verify(g: DhloGraph) -> list:
    """Return all invariant violations of ``g``; an empty list means the graph is valid."""
    return _Verifier(g).run()
