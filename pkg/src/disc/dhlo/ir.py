"""Core data structures of the dynamic-shape dialect.

Shapes are tuples whose entries are either plain ``int`` (a known size) or a
:class:`Sym` (a dimension symbol).  Ranks are always static.  Shape-like
attributes of ``slice``/``pad``/``broadcast``/``reshape`` are tensor operands
computed by the integer ops ``shape_of``, ``extract_dim``, ``scalar_arith``,
``from_elements`` and ``constant``; nothing about an extent is baked into an
attribute.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Union


@dataclass(frozen=True, order=True)
class Sym:
    id: int

    def __repr__(self) -> str:
        return f"s{self.id}"


Dim = Union[int, Sym]
Shape = tuple  # tuple[Dim, ...]

MAX_CONST_DIM = (1 << 63) - 1


def format_dim(d: Dim) -> str:
    return repr(d) if isinstance(d, Sym) else str(d)


def format_shape(shape: Iterable[Dim]) -> str:
    return "[" + ",".join(format_dim(d) for d in shape) + "]"


def dim_to_json(d: Dim):
    return repr(d) if isinstance(d, Sym) else int(d)


def dim_from_json(x) -> Dim:
    if isinstance(x, str):
        if not x.startswith("s") or not x[1:].isdigit():
            raise ValueError(f"bad dimension {x!r}")
        return Sym(int(x[1:]))
    if isinstance(x, bool) or not isinstance(x, int) or x < 0:
        raise ValueError(f"bad dimension {x!r}")
    return x


def is_static(shape: Iterable[Dim]) -> bool:
    return all(not isinstance(d, Sym) for d in shape)


def num_elements(shape: Iterable[int]) -> int:
    return math.prod(shape)


ELEMENTWISE_BINARY = frozenset({"add", "sub", "mul", "div", "maximum"})
ELEMENTWISE_UNARY = frozenset({"exp", "tanh", "neg"})
ELEMENTWISE = ELEMENTWISE_BINARY | ELEMENTWISE_UNARY
SHAPE_OPS = frozenset({"shape_of", "extract_dim", "scalar_arith", "from_elements"})
DATA_OPS = ELEMENTWISE | frozenset({
    "reduce", "transpose", "dynamic_broadcast_in_dim", "dynamic_reshape",
    "dynamic_slice", "dynamic_pad", "concat", "matmul",
})
ALL_KINDS = DATA_OPS | SHAPE_OPS | {"constant"}
SCALAR_FNS = frozenset({"add", "sub", "mul", "floordiv", "ceil_div", "max", "bcast_dim"})
REDUCE_MODES = frozenset({"sum", "max"})

# Number of leading operands that carry tensor data; the rest are index operands.
_DATA_ARITY = {
    "dynamic_broadcast_in_dim": 1,
    "dynamic_reshape": 1,
    "dynamic_slice": 1,
    "dynamic_pad": 2,
}


@dataclass(frozen=True)
class SymbolOrigin:
    """Where a dimension symbol comes from.

    ``kind`` is ``"input"`` (``ref`` names a graph input) or ``"op"`` (``ref``
    names the op whose result first carries the symbol).  ``name`` keeps the
    user-facing symbol string for input symbols.
    """

    kind: str
    ref: str
    axis: int
    name: str | None = None

    def describe(self) -> str:
        if self.kind == "input":
            label = f' "{self.name}"' if self.name else ""
            return f"input {self.ref}[{self.axis}]{label}"
        return f"op %{self.ref}[{self.axis}]"


@dataclass(frozen=True)
class Value:
    id: str
    shape: tuple
    dtype: str = "f32"


@dataclass(frozen=True, eq=True)
class DhloOp:
    id: str
    kind: str
    inputs: tuple
    shape: tuple
    dtype: str = "f32"
    attrs: Mapping = field(default_factory=dict)

    __hash__ = None  # attrs is a dict

    @property
    def data_inputs(self) -> tuple:
        n = _DATA_ARITY.get(self.kind)
        return self.inputs if n is None else self.inputs[:n]

    @property
    def index_inputs(self) -> tuple:
        n = _DATA_ARITY.get(self.kind)
        return () if n is None else self.inputs[n:]

    @property
    def is_data_op(self) -> bool:
        return self.kind in DATA_OPS

    def with_(self, **changes) -> "DhloOp":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DhloGraph:
    name: str
    inputs: tuple
    outputs: tuple
    ops: tuple
    symbols: Mapping = field(default_factory=dict)

    __hash__ = None

    @cached_property
    def _types(self) -> dict:
        types = {v.id: (tuple(v.shape), v.dtype) for v in self.inputs}
        for op in self.ops:
            types.setdefault(op.id, (tuple(op.shape), op.dtype))
        return types

    @cached_property
    def _producers(self) -> dict:
        return {op.id: op for op in self.ops}

    @cached_property
    def _users(self) -> dict:
        users: dict[str, list[DhloOp]] = {}
        for op in self.ops:
            for v in dict.fromkeys(op.inputs):
                users.setdefault(v, []).append(op)
        return users

    @cached_property
    def input_ids(self) -> tuple:
        return tuple(v.id for v in self.inputs)

    def has_value(self, vid: str) -> bool:
        return vid in self._types

    def shape(self, vid: str) -> tuple:
        return self._types[vid][0]

    def dtype(self, vid: str) -> str:
        return self._types[vid][1]

    def producer(self, vid: str) -> DhloOp | None:
        return self._producers.get(vid)

    def users(self, vid: str) -> list:
        return self._users.get(vid, [])

    def data_ops(self) -> list:
        return [op for op in self.ops if op.is_data_op]

    def used_symbols(self) -> set:
        syms = set()
        for v in self.inputs:
            syms.update(d for d in v.shape if isinstance(d, Sym))
        for op in self.ops:
            syms.update(d for d in op.shape if isinstance(d, Sym))
        return syms

    def symbol_name(self, sym: Sym) -> str:
        origin = self.symbols.get(sym.id)
        if origin is not None and origin.name:
            return origin.name
        return repr(sym)

    def replace(self, **changes) -> "DhloGraph":
        return dataclasses.replace(self, **changes)

    def map_shapes(self, fn) -> "DhloGraph":
        """Rewrite every dimension through ``fn(dim) -> dim``."""
        inputs = tuple(dataclasses.replace(v, shape=tuple(fn(d) for d in v.shape)) for v in self.inputs)
        ops = tuple(op.with_(shape=tuple(fn(d) for d in op.shape)) for op in self.ops)
        return self.replace(inputs=inputs, ops=ops)


class GraphBuilder:
    """Mutable helper that assembles a :class:`DhloGraph` op by op.

    The integer helpers (:meth:`dim`, :meth:`arith`, :meth:`vector`) fold
    arithmetic on known sizes in Python and only emit ops for values that are
    genuinely unknown at compile time.
    """

    def __init__(self, name: str):
        self.name = name
        self.inputs: list[Value] = []
        self.ops: list[DhloOp] = []
        self.symbols: dict[int, SymbolOrigin] = {}
        self._types: dict[str, tuple] = {}
        self._next_op = 0
        self._next_sym = 0
        self._memo: dict[tuple, str] = {}

    # -- symbols and values -------------------------------------------------
    def new_sym(self, origin: SymbolOrigin) -> Sym:
        sym = Sym(self._next_sym)
        self._next_sym += 1
        self.symbols[sym.id] = origin
        return sym

    def add_input(self, vid: str, shape, dtype: str = "f32") -> str:
        self.inputs.append(Value(vid, tuple(shape), dtype))
        self._types[vid] = (tuple(shape), dtype)
        return vid

    def shape(self, vid: str) -> tuple:
        return self._types[vid][0]

    def reserve_id(self) -> str:
        vid = str(self._next_op)
        self._next_op += 1
        return vid

    def emit(self, kind: str, inputs, shape, dtype: str = "f32", attrs=None, vid: str | None = None) -> str:
        vid = self.reserve_id() if vid is None else vid
        op = DhloOp(vid, kind, tuple(inputs), tuple(shape), dtype, dict(attrs or {}))
        self.ops.append(op)
        self._types[vid] = (op.shape, dtype)
        return vid

    # -- integer shape computation -----------------------------------------
    def const_i64(self, values, scalar: bool = False) -> str:
        values = tuple(int(v) for v in values)
        key = ("const", values, scalar)
        if key not in self._memo:
            shape = () if scalar else (len(values),)
            self._memo[key] = self.emit("constant", (), shape, "i64", {"value": list(values)})
        return self._memo[key]

    def const_f32(self, value: float) -> str:
        key = ("constf", float(value))
        if key not in self._memo:
            self._memo[key] = self.emit("constant", (), (), "f32", {"value": [float(value)]})
        return self._memo[key]

    def shape_of(self, vid: str) -> str:
        key = ("shape_of", vid)
        if key not in self._memo:
            rank = len(self.shape(vid))
            self._memo[key] = self.emit("shape_of", (vid,), (rank,), "i64")
        return self._memo[key]

    def dim(self, vid: str, axis: int):
        """Size of ``vid`` along ``axis``: an int when known, else a scalar value id."""
        d = self.shape(vid)[axis]
        if not isinstance(d, Sym):
            return d
        key = ("extract", vid, axis)
        if key not in self._memo:
            self._memo[key] = self.emit("extract_dim", (self.shape_of(vid),), (), "i64", {"index": axis})
        return self._memo[key]

    def scalar(self, x) -> str:
        return self.const_i64([x], scalar=True) if isinstance(x, int) else x

    def arith(self, fn: str, a, b):
        if isinstance(a, int) and isinstance(b, int):
            return eval_scalar_fn(fn, a, b)
        key = ("arith", fn, a, b)
        if key not in self._memo:
            self._memo[key] = self.emit("scalar_arith", (self.scalar(a), self.scalar(b)), (), "i64", {"fn": fn})
        return self._memo[key]

    def vector(self, elems) -> str:
        elems = list(elems)
        if all(isinstance(e, int) for e in elems):
            return self.const_i64(elems)
        key = ("vector", tuple(elems))
        if key not in self._memo:
            self._memo[key] = self.emit("from_elements", [self.scalar(e) for e in elems], (len(elems),), "i64")
        return self._memo[key]

    def build(self, outputs) -> DhloGraph:
        return DhloGraph(self.name, tuple(self.inputs), tuple(outputs), tuple(self.ops), dict(self.symbols))


def ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def eval_scalar_fn(fn: str, a: int, b: int) -> int:
    """Integer semantics of ``scalar_arith``; shared by every evaluator."""
    if fn == "add":
        return a + b
    if fn == "sub":
        return a - b
    if fn == "mul":
        return a * b
    if fn == "floordiv":
        if b == 0:
            raise ZeroDivisionError("floordiv by zero in shape computation")
        return a // b
    if fn == "ceil_div":
        if b == 0:
            raise ZeroDivisionError("ceil_div by zero in shape computation")
        return ceil_div(a, b)
    if fn == "max":
        return max(a, b)
    if fn == "bcast_dim":
        if a == b or b == 1:
            return a
        if a == 1:
            return b
        raise ValueError(f"incompatible broadcast dimensions {a} and {b}")
    raise ValueError(f"unknown scalar fn {fn!r}")
