"""Shape propagation table and the fixed-point constraint inference."""

from __future__ import annotations

from ..dhlo.ir import DhloGraph, DhloOp, Sym, eval_scalar_fn
from .constraints import ConstraintSet

ELEMENTWISE_SAME_SHAPE = "ElementwiseSameShape"
UNARY_SHAPE_PRESERVING = "UnaryShapePreserving"
TRANSPOSE = "Transpose"
REDUCE = "Reduce"
MATMUL = "MatMul"
CONCAT = "Concat"
SIZE_PRESERVING_ONLY = "SizePreservingOnly"
BROADCAST = "Broadcast"
OPAQUE = "Opaque"
SHAPE_COMPUTATION = "ShapeComputation"

PROPAGATION_CLASS = {
    "add": ELEMENTWISE_SAME_SHAPE,
    "sub": ELEMENTWISE_SAME_SHAPE,
    "mul": ELEMENTWISE_SAME_SHAPE,
    "div": ELEMENTWISE_SAME_SHAPE,
    "maximum": ELEMENTWISE_SAME_SHAPE,
    "exp": UNARY_SHAPE_PRESERVING,
    "tanh": UNARY_SHAPE_PRESERVING,
    "neg": UNARY_SHAPE_PRESERVING,
    "transpose": TRANSPOSE,
    "reduce": REDUCE,
    "matmul": MATMUL,
    "concat": CONCAT,
    "dynamic_reshape": SIZE_PRESERVING_ONLY,
    "dynamic_broadcast_in_dim": BROADCAST,
    "dynamic_slice": OPAQUE,
    "dynamic_pad": OPAQUE,
    "constant": SHAPE_COMPUTATION,
    "shape_of": SHAPE_COMPUTATION,
    "extract_dim": SHAPE_COMPUTATION,
    "scalar_arith": SHAPE_COMPUTATION,
    "from_elements": SHAPE_COMPUTATION,
}


def propagation_class(kind: str) -> str:
    return PROPAGATION_CLASS[kind]


class RuleResult:
    """Expected result dims (``None`` = no information) plus equalities to record."""

    __slots__ = ("out", "dim_eqs", "size_eqs")

    def __init__(self, out, dim_eqs=(), size_eqs=()):
        self.out = out
        self.dim_eqs = list(dim_eqs)
        self.size_eqs = list(size_eqs)


def _elementwise(op, shapes, values):
    first = shapes[0]
    eqs = [(a, b) for s in shapes[1:] for a, b in zip(first, s)]
    return RuleResult(list(first), eqs)


def _unary(op, shapes, values):
    return RuleResult(list(shapes[0]))


def _transpose(op, shapes, values):
    s = shapes[0]
    out = [s[p] for p in op.attrs["perm"]]
    return RuleResult(out, size_eqs=[(s, op.shape)])


def _reduce(op, shapes, values):
    axes = set(op.attrs["axes"])
    return RuleResult([d for i, d in enumerate(shapes[0]) if i not in axes])


def _matmul(op, shapes, values):
    a, b = shapes
    return RuleResult([a[0], b[1]], [(a[1], b[0])])


def _concat(op, shapes, values):
    axis = op.attrs["axis"]
    first = shapes[0]
    eqs = [(first[i], s[i]) for s in shapes[1:] for i in range(len(first)) if i != axis]
    out = list(first)
    along = [s[axis] for s in shapes]
    out[axis] = sum(along) if all(isinstance(d, int) for d in along) else None
    return RuleResult(out, eqs)


def _shape_operand(op, values):
    vec = values.get(op.inputs[1])
    return list(vec) if vec is not None else [None] * len(op.shape)


def _size_preserving(op, shapes, values):
    return RuleResult(_shape_operand(op, values), size_eqs=[(shapes[0], op.shape)])


def _broadcast(op, shapes, values):
    out = _shape_operand(op, values)
    eqs = []
    for i, d in enumerate(shapes[0]):
        if isinstance(d, int) and d != 1:
            eqs.append((d, op.shape[op.attrs["broadcast_dims"][i]]))
    return RuleResult(out, eqs)


def _opaque(op, shapes, values):
    return RuleResult([None] * len(op.shape))


RULES = {
    ELEMENTWISE_SAME_SHAPE: _elementwise,
    UNARY_SHAPE_PRESERVING: _unary,
    TRANSPOSE: _transpose,
    REDUCE: _reduce,
    MATMUL: _matmul,
    CONCAT: _concat,
    SIZE_PRESERVING_ONLY: _size_preserving,
    BROADCAST: _broadcast,
    OPAQUE: _opaque,
}


def _simplify(fn: str, a, b, cs: ConstraintSet):
    """Symbolic ``scalar_arith``: returns a Dim or None when nothing is known."""
    if a is not None:
        a = cs.const_value(a) if cs.const_value(a) is not None else a
    if b is not None:
        b = cs.const_value(b) if cs.const_value(b) is not None else b
    if isinstance(a, int) and isinstance(b, int):
        try:
            return eval_scalar_fn(fn, a, b)
        except (ValueError, ZeroDivisionError):
            return None
    if fn == "add":
        return a if b == 0 else b if a == 0 else None
    if fn == "sub":
        if b == 0:
            return a
        return 0 if a is not None and b is not None and cs.same(a, b) else None
    if fn == "mul":
        if a == 0 or b == 0:
            return 0
        return a if b == 1 else b if a == 1 else None
    if fn in ("floordiv", "ceil_div"):
        return a if b == 1 else None
    if fn in ("max", "bcast_dim"):
        if a is not None and b is not None and cs.same(a, b):
            return a
        if fn == "bcast_dim":
            return a if b == 1 else b if a == 1 else None
    return None


def symbolic_values(g: DhloGraph, cs: ConstraintSet) -> dict:
    """Best-effort symbolic contents of every i64 value: a list of Dim-or-None."""
    values: dict = {}
    for op in g.ops:
        k = op.kind
        if k == "constant" and op.dtype == "i64":
            values[op.id] = list(op.attrs["value"])
        elif k == "shape_of":
            values[op.id] = list(g.shape(op.inputs[0]))
        elif k == "extract_dim":
            src = values.get(op.inputs[0])
            values[op.id] = [src[op.attrs["index"]] if src is not None else None]
        elif k == "from_elements":
            values[op.id] = [values.get(x, [None])[0] for x in op.inputs]
        elif k == "scalar_arith":
            a = values.get(op.inputs[0], [None])[0]
            b = values.get(op.inputs[1], [None])[0]
            values[op.id] = [_simplify(op.attrs["fn"], a, b, cs)]
    return values


def apply_rule(op: DhloOp, g: DhloGraph, values: dict) -> RuleResult | None:
    cls = PROPAGATION_CLASS[op.kind]
    rule = RULES.get(cls)
    if rule is None:
        return None
    shapes = [g.shape(x) for x in op.data_inputs]
    return rule(op, shapes, values)


def infer(g: DhloGraph, seed: ConstraintSet | None = None) -> ConstraintSet:
    """Fixed point of every op's propagation rule, starting from ``seed``.

    The returned set is frozen; ``seed`` is left untouched.
    """
    cs = seed.copy() if seed is not None else ConstraintSet()
    changed = True
    while changed:
        changed = False
        values = symbolic_values(g, cs)
        for op in g.ops:
            res = apply_rule(op, g, values)
            if res is None:
                continue
            for a, b in res.dim_eqs:
                changed |= cs.union(a, b, op.id)
            for expect, actual in zip(res.out, op.shape):
                if expect is not None:
                    changed |= cs.union(expect, actual, op.id)
            for a, b in res.size_eqs:
                changed |= cs.link_sizes(a, b)
    return cs.freeze()


def canonical_dim(cs: ConstraintSet, d):
    return cs.find(d) if isinstance(d, Sym) else d
