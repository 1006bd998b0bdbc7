"""Lowering of framework graphs to DHLO plus frontend-injected shape constraints."""

from __future__ import annotations

from ..dhlo.ir import GraphBuilder, Sym, SymbolOrigin
from ..dhlo.passes import dead_code_elimination
from ..errors import UnsupportedOpError
from ..shape_analysis.constraints import ConstraintSet
from .graph import BINARY_OPS, UNARY_OPS, FrameworkGraph, FrameworkNode


class _Lowering:
    def __init__(self, g: FrameworkGraph, inject: bool):
        self.g = g
        self.inject = inject
        self.b = GraphBuilder(g.name)
        self.cs = ConstraintSet()
        self.env: dict = {}
        self.names: dict = {}      # symbol name -> Dim
        self.name_src: dict = {}   # symbol name -> (value id, axis)
        self.expand: dict = {}     # keep_dims broadcast -> (reduce value, broadcast_dims)

    def run(self):
        b = self.b
        for t in self.g.inputs:
            shape = []
            for axis, d in enumerate(t.shape):
                if isinstance(d, str):
                    if d not in self.names:
                        self.names[d] = b.new_sym(SymbolOrigin("input", t.id, axis, d))
                        self.name_src[d] = (t.id, axis)
                    shape.append(self.names[d])
                else:
                    shape.append(d)
            b.add_input(t.id, shape)
            self.env[t.id] = t.id
        for node in self.g.nodes:
            outs = self.lower_node(node, [self.env[x] for x in node.inputs])
            for tid, vid in zip(node.outputs, outs):
                self.env[tid] = vid
        graph = b.build([self.env[o] for o in self.g.outputs])
        return dead_code_elimination(graph), self.cs

    # -- helpers --------------------------------------------------------------
    def fresh(self, vid: str, axis: int) -> Sym:
        return self.b.new_sym(SymbolOrigin("op", vid, axis))

    def name_elem(self, name: str):
        d = self.names[name]
        if not isinstance(d, Sym):
            return d
        vid, axis = self.name_src[name]
        return self.b.dim(vid, axis)

    def name_dim(self, entry):
        return entry if isinstance(entry, int) else self.names[entry]

    def mul(self, chunk, k: int):
        if k == 0:
            return 0
        if k == 1:
            return chunk
        return self.b.arith("mul", chunk, k)

    def broadcast_to(self, x: str, out_dims, out_elems, bd):
        if x in self.expand:
            src, bd0 = self.expand[x]
            bd = [bd[j] for j in bd0]
            x = src
        vec = self.b.vector(out_elems)
        return self.b.emit("dynamic_broadcast_in_dim", [x, vec], out_dims, attrs={"broadcast_dims": list(bd)})

    def full_elems(self, x: str):
        return [self.b.dim(x, i) for i in range(len(self.b.shape(x)))]

    # -- per-op lowering ------------------------------------------------------
    def lower_node(self, node: FrameworkNode, ins: list) -> list:
        op = node.op
        b = self.b
        a = node.attrs
        if op in BINARY_OPS:
            return [self.binary(BINARY_OPS[op], ins[0], ins[1])]
        if op in UNARY_OPS:
            return [b.emit(UNARY_OPS[op], ins, b.shape(ins[0]))]
        if op in ("ReduceSum", "ReduceMax"):
            return [self.reduce("sum" if op == "ReduceSum" else "max", ins[0], a["axes"], a["keep_dims"])]
        if op == "Transpose":
            s = b.shape(ins[0])
            return [b.emit("transpose", ins, [s[p] for p in a["perm"]], attrs={"perm": list(a["perm"])})]
        if op == "Softmax":
            return [self.softmax(ins[0], a["axis"])]
        if op == "MatMul":
            sa, sb = b.shape(ins[0]), b.shape(ins[1])
            return [b.emit("matmul", ins, [sa[0], sb[1]])]
        if op == "Reshape":
            return [self.reshape(ins[0], a["shape"])]
        if op == "Broadcast":
            return [self.broadcast(ins[0], a["shape"], a["broadcast_dims"])]
        if op == "Slice":
            return [self.slice(ins[0], a["begin"], a["end"], a["strides"])]
        if op == "Pad":
            return [self.pad(ins[0], a["low"], a["high"], a["interior"], a["value"])]
        if op == "Split":
            return self.split(ins[0], a["axis"], a["num_splits"])
        if op == "Concat":
            return [self.concat(ins, a["axis"])]
        raise UnsupportedOpError(f"unsupported op {op}")

    def binary(self, kind: str, x: str, y: str) -> str:
        b = self.b
        sx, sy = b.shape(x), b.shape(y)
        r = max(len(sx), len(sy))
        ox, oy = r - len(sx), r - len(sy)
        vid = b.reserve_id()
        dims, elems = [], []
        for i in range(r):
            dx = sx[i - ox] if i >= ox else None
            dy = sy[i - oy] if i >= oy else None
            if dy is None or dx == dy or dy == 1:
                src = (x, i - ox)
                d = dx
            elif dx is None or dx == 1:
                src = (y, i - oy)
                d = dy
            elif not isinstance(dx, Sym):
                src, d = (x, i - ox), dx
            elif not isinstance(dy, Sym):
                src, d = (y, i - oy), dy
            else:
                elem = b.arith("bcast_dim", b.dim(x, i - ox), b.dim(y, i - oy))
                dims.append(self.fresh(vid, i))
                elems.append(elem)
                continue
            dims.append(d)
            elems.append(d if isinstance(d, int) else b.dim(*src))
        operands = []
        for v, s, off in ((x, sx, ox), (y, sy, oy)):
            if len(s) == r and tuple(s) == tuple(dims):
                operands.append(v)
            else:
                operands.append(self.broadcast_to(v, dims, elems, list(range(off, r))))
        return b.emit(kind, operands, dims, vid=vid)

    def reduce(self, mode: str, x: str, axes, keep_dims: bool) -> str:
        b = self.b
        s = b.shape(x)
        out = [d for i, d in enumerate(s) if i not in axes]
        r = b.emit("reduce", [x], out, attrs={"mode": mode, "axes": list(axes)})
        if not keep_dims:
            return r
        kept = [i for i in range(len(s)) if i not in axes]
        elems = [1 if i in axes else b.dim(x, i) for i in range(len(s))]
        shape = [1 if i in axes else s[i] for i in range(len(s))]
        y = self.broadcast_to(r, shape, elems, kept)
        self.expand[y] = (r, kept)
        return y

    def softmax(self, x: str, axis: int) -> str:
        b = self.b
        s = b.shape(x)
        kept = [i for i in range(len(s)) if i != axis]
        elems = self.full_elems(x)
        m = self.reduce("max", x, [axis], False)
        mb = self.broadcast_to(m, s, elems, kept)
        e = b.emit("exp", [b.emit("sub", [x, mb], s)], s)
        total = self.reduce("sum", e, [axis], False)
        tb = self.broadcast_to(total, s, elems, kept)
        return b.emit("div", [e, tb], s)

    def reshape(self, x: str, entries) -> str:
        b = self.b
        s = b.shape(x)
        vid = b.reserve_id()
        dims, elems = [], []
        infer_pos, new_name = None, None
        for j, e in enumerate(entries):
            if e == -1 or (isinstance(e, str) and e not in self.names):
                infer_pos = j
                new_name = e if isinstance(e, str) else None
                dims.append(None)
                elems.append(None)
            else:
                dims.append(self.name_dim(e))
                elems.append(e if isinstance(e, int) else self.name_elem(e))
        if infer_pos is not None:
            total = 1
            for i in range(len(s)):
                total = b.arith("mul", total, b.dim(x, i)) if total != 1 else b.dim(x, i)
            rest = 1
            for j, e in enumerate(elems):
                if j != infer_pos:
                    rest = b.arith("mul", rest, e) if rest != 1 else e
            value = b.arith("floordiv", total, rest) if rest != 1 else total
            elems[infer_pos] = value
            dims[infer_pos] = value if isinstance(value, int) else self.fresh(vid, infer_pos)
            if new_name is not None:
                self.names[new_name] = dims[infer_pos]
                self.name_src[new_name] = (vid, infer_pos)
        out = b.emit("dynamic_reshape", [x, b.vector(elems)], dims, vid=vid)
        if self.inject:
            self.cs.link_sizes(s, dims)
        return out

    def broadcast(self, x: str, target, bd) -> str:
        dims = [self.name_dim(e) for e in target]
        elems = [e if isinstance(e, int) else self.name_elem(e) for e in target]
        return self.broadcast_to(x, dims, elems, bd)

    def slice(self, x: str, begin, end, strides) -> str:
        b = self.b
        rank = len(b.shape(x))
        start = b.const_i64(begin)
        limit = b.vector([e if e is not None else b.dim(x, i) for i, e in enumerate(end)])
        step = b.const_i64(strides)
        vid = b.reserve_id()
        return b.emit("dynamic_slice", [x, start, limit, step], [self.fresh(vid, i) for i in range(rank)], vid=vid)

    def pad(self, x: str, low, high, interior, value) -> str:
        b = self.b
        rank = len(b.shape(x))
        operands = [x, b.const_f32(value), b.const_i64(low), b.const_i64(high), b.const_i64(interior)]
        vid = b.reserve_id()
        return b.emit("dynamic_pad", operands, [self.fresh(vid, i) for i in range(rank)], vid=vid)

    def split(self, x: str, axis: int, n: int) -> list:
        b = self.b
        s = b.shape(x)
        r = len(s)
        chunk = b.arith("floordiv", b.dim(x, axis), n)
        step = b.const_i64([1] * r)
        outs = []
        for k in range(n):
            start = [0] * r
            start[axis] = self.mul(chunk, k)
            limit = self.full_elems(x)
            limit[axis] = self.mul(chunk, k + 1)
            vid = b.reserve_id()
            dims = [self.fresh(vid, i) for i in range(r)]
            outs.append(b.emit("dynamic_slice", [x, b.vector(start), b.vector(limit), step], dims, vid=vid))
        if self.inject:
            first = b.shape(outs[0])
            for v in outs:
                for i, d in enumerate(b.shape(v)):
                    self.cs.union(d, first[i] if i == axis else s[i])
        return outs

    def concat(self, ins: list, axis: int) -> str:
        b = self.b
        first = b.shape(ins[0])
        along = [b.shape(v)[axis] for v in ins]
        vid = b.reserve_id()
        dims = list(first)
        dims[axis] = sum(along) if all(isinstance(d, int) for d in along) else self.fresh(vid, axis)
        return b.emit("concat", ins, dims, attrs={"axis": axis}, vid=vid)


def lower_to_dhlo(g: FrameworkGraph, inject_constraints: bool = True):
    """Lower a validated framework graph; returns ``(DhloGraph, ConstraintSet)``.

    The constraint set holds what the framework ops imply but the DHLO ops do
    not: pairwise-equal Split outputs and Reshape size links.
    """
    return _Lowering(g, inject_constraints).run()
