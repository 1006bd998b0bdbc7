"""Host-side shape calculation program.

The emitter walks the graph once, computes one register per dimension class
and binds each class representative exactly once.  Formula instructions that
are only needed to double-check an already-bound class are moved to a
separate ``checks`` list, which the executor runs in verify mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..dhlo.ir import DhloGraph, Sym, eval_scalar_fn
from ..errors import NotStaticError, ShapeMismatchError, UnbindableSymbolError
from .constraints import ConstraintSet


@dataclass(frozen=True)
class ReadInputDim:
    dst: int
    input: int
    axis: int


@dataclass(frozen=True)
class LoadConst:
    dst: int
    value: int


@dataclass(frozen=True)
class ReadScalar:
    """Reads element ``index`` of the integer literal ``tensor``."""

    dst: int
    tensor: str
    index: int


@dataclass(frozen=True)
class BinOp:
    dst: int
    fn: str
    a: int
    b: int


@dataclass(frozen=True)
class BindDim:
    sym: int
    src: int


@dataclass(frozen=True)
class AssertDim:
    """Fails the run unless register ``src`` equals the bound value of ``sym`` (or ``const``)."""

    src: int
    sym: int | None
    const: int | None
    what: str


INSTRUCTION_TYPES = {c.__name__: c for c in (ReadInputDim, LoadConst, ReadScalar, BinOp, BindDim, AssertDim)}


def instr_to_json(ins) -> dict:
    d = {"op": type(ins).__name__}
    d.update(ins.__dict__)
    return d


def instr_from_json(d: dict):
    d = dict(d)
    cls = INSTRUCTION_TYPES[d.pop("op")]
    return cls(**d)


def _reads(ins) -> tuple:
    if isinstance(ins, BinOp):
        return (ins.a, ins.b)
    if isinstance(ins, (BindDim, AssertDim)):
        return (ins.src,)
    return ()


def _writes(ins):
    return getattr(ins, "dst", None)


@dataclass
class ShapeProgram:
    instructions: list
    checks: list
    num_registers: int
    literals: dict  # tensor id -> list[int]
    operand_regs: dict  # index-operand value id -> list of registers
    bound: dict  # sym id -> register
    levels: list = field(default_factory=list)  # per instruction: last graph input it depends on, -1 for none

    def segments(self) -> list:
        """(level, start, end) slices of ``instructions``, levels increasing."""
        out = []
        for i, lvl in enumerate(self.levels):
            if out and out[-1][0] == lvl:
                out[-1][2] = i + 1
            else:
                out.append([lvl, i, i + 1])
        return [tuple(s) for s in out]


class _Emitter:
    def __init__(self, g: DhloGraph, cs: ConstraintSet):
        self.g = g
        self.cs = cs
        self.instrs: list = []
        self.nreg = 0
        self.const_reg: dict = {}
        self.elem_reg: dict = {}
        self.dim_reg: dict = {}
        self.literals: dict = {}
        self.roots: set = set()

    def new_reg(self) -> int:
        self.nreg += 1
        return self.nreg - 1

    def push(self, ins, root: bool = False):
        self.instrs.append(ins)
        if root:
            self.roots.add(len(self.instrs) - 1)
        return ins

    def reg_const(self, value: int) -> int:
        if value not in self.const_reg:
            r = self.new_reg()
            self.push(LoadConst(r, int(value)))
            self.const_reg[value] = r
        return self.const_reg[value]

    def reg_dim(self, d, needed_by: str) -> int:
        rep = self.cs.find(d) if isinstance(d, Sym) else d
        if not isinstance(rep, Sym):
            return self.reg_const(rep)
        if rep not in self.dim_reg:
            raise UnbindableSymbolError(
                f"symbol {self.g.symbol_name(d) if isinstance(d, Sym) else d} needed by %{needed_by} "
                "has no runtime source")
        return self.dim_reg[rep]

    def binop(self, fn: str, a: int, b: int) -> int:
        key = ("bin", fn, a, b)
        if key not in self.elem_reg:
            r = self.new_reg()
            self.push(BinOp(r, fn, a, b))
            self.elem_reg[key] = r
        return self.elem_reg[key]

    def reg_elem(self, vid: str, index: int) -> int:
        key = (vid, index)
        if key in self.elem_reg:
            return self.elem_reg[key]
        op = self.g.producer(vid)
        if op is None:
            raise UnbindableSymbolError(f"index operand %{vid} is not computable from graph inputs")
        k = op.kind
        if k == "constant":
            self.literals[vid] = [int(x) for x in op.attrs["value"]]
            r = self.new_reg()
            self.push(ReadScalar(r, vid, index))
        elif k == "shape_of":
            r = self.reg_dim(self.g.shape(op.inputs[0])[index], vid)
        elif k == "extract_dim":
            r = self.reg_elem(op.inputs[0], op.attrs["index"])
        elif k == "from_elements":
            r = self.reg_elem(op.inputs[index], 0)
        elif k == "scalar_arith":
            r = self.binop(op.attrs["fn"], self.reg_elem(op.inputs[0], 0), self.reg_elem(op.inputs[1], 0))
        else:
            raise UnbindableSymbolError(
                f"index operand %{vid} is produced by data op {k}; data-dependent shapes are unsupported")
        self.elem_reg[key] = r
        return r

    def bind(self, d, reg: int, what: str, required: bool) -> None:
        rep = self.cs.find(d) if isinstance(d, Sym) else d
        if not isinstance(rep, Sym):
            self.push(AssertDim(reg, None, rep, what), root=required)
        elif rep in self.dim_reg:
            if self.dim_reg[rep] != reg:
                self.push(AssertDim(reg, rep.id, None, what), root=required)
        else:
            self.push(BindDim(rep.id, reg), root=True)
            self.dim_reg[rep] = reg

    def formula(self, op, axis: int):
        g = self.g
        k = op.kind
        if k in ("dynamic_broadcast_in_dim", "dynamic_reshape"):
            return self.reg_elem(op.inputs[1], axis)
        if k == "dynamic_slice":
            start = self.reg_elem(op.inputs[1], axis)
            limit = self.reg_elem(op.inputs[2], axis)
            stride = self.reg_elem(op.inputs[3], axis)
            extent = self.binop("max", self.binop("sub", limit, start), self.reg_const(0))
            return self.binop("ceil_div", extent, stride)
        if k == "dynamic_pad":
            n = self.reg_dim(g.shape(op.inputs[0])[axis], op.id)
            low = self.reg_elem(op.inputs[2], axis)
            high = self.reg_elem(op.inputs[3], axis)
            interior = self.reg_elem(op.inputs[4], axis)
            gaps = self.binop("max", self.binop("sub", n, self.reg_const(1)), self.reg_const(0))
            total = self.binop("add", self.binop("add", low, high), n)
            return self.binop("add", total, self.binop("mul", gaps, interior))
        if k == "concat" and axis == op.attrs["axis"]:
            regs = [self.reg_dim(g.shape(x)[axis], op.id) for x in op.inputs]
            acc = regs[0]
            for r in regs[1:]:
                acc = self.binop("add", acc, r)
            return acc
        return None

    def run(self) -> ShapeProgram:
        g = self.g
        for idx, v in enumerate(g.inputs):
            for axis, d in enumerate(v.shape):
                if not isinstance(self.cs.find(d) if isinstance(d, Sym) else d, Sym):
                    continue  # constant extents are validated when the input is bound
                r = self.new_reg()
                self.push(ReadInputDim(r, idx, axis))
                self.bind(d, r, f"input {v.id}[{axis}]", required=True)
        for op in g.data_ops():
            for axis, d in enumerate(op.shape):
                rep = self.cs.find(d) if isinstance(d, Sym) else d
                unbound = isinstance(rep, Sym) and rep not in self.dim_reg
                r = self.formula(op, axis)
                if r is None:
                    if unbound:
                        raise UnbindableSymbolError(
                            f"symbol {self.g.symbol_name(d)} of %{op.id} axis {axis} has no runtime source")
                    continue
                self.bind(d, r, f"%{op.id}[{axis}]", required=False)
        operand_regs = {}
        for op in g.data_ops():
            if op.kind in ("dynamic_slice", "dynamic_pad"):
                first = 1 if op.kind == "dynamic_slice" else 2
                rank = len(g.shape(op.inputs[0]))
                for vid in op.inputs[first:]:
                    if vid not in operand_regs:
                        operand_regs[vid] = [self.reg_elem(vid, i) for i in range(rank)]
        root_regs = {r for regs in operand_regs.values() for r in regs}
        return self._finish(operand_regs, root_regs)

    def _finish(self, operand_regs: dict, root_regs: set) -> ShapeProgram:
        instrs = self.instrs
        writer = {}
        for i, ins in enumerate(instrs):
            w = _writes(ins)
            if w is not None:
                writer[w] = i
        needed = set()
        stack = [i for i in self.roots] + [writer[r] for r in root_regs]
        while stack:
            i = stack.pop()
            if i in needed:
                continue
            needed.add(i)
            stack.extend(writer[r] for r in _reads(instrs[i]))
        main = [ins for i, ins in enumerate(instrs) if i in needed]
        checks = [ins for i, ins in enumerate(instrs) if i not in needed]
        # level = highest graph input an instruction (transitively) depends on
        level_of_reg: dict = {}
        levels = []
        for ins in main:
            if isinstance(ins, ReadInputDim):
                lvl = ins.input
            else:
                lvl = max([level_of_reg[r] for r in _reads(ins)], default=-1)
            w = _writes(ins)
            if w is not None:
                level_of_reg[w] = lvl
            levels.append(lvl)
        order = sorted(range(len(main)), key=lambda i: levels[i])
        main = [main[i] for i in order]
        levels = [levels[i] for i in order]
        bound = {rep.id: r for rep, r in self.dim_reg.items()}
        literals = {k: self.literals[k] for k in sorted(self.literals)}
        return ShapeProgram(main, checks, self.nreg, literals, operand_regs, bound, levels)


def emit_shape_program(g: DhloGraph, cs: ConstraintSet) -> ShapeProgram:
    return _Emitter(g, cs).run()


def execute(instrs, regs: list, env: dict, literals: dict, input_shapes) -> None:
    """Run shape instructions in place over ``regs`` / ``env`` (sym id -> size)."""
    for ins in instrs:
        t = type(ins)
        if t is ReadInputDim:
            if input_shapes is None:
                raise NotStaticError(f"input {ins.input} dimension {ins.axis} is not known at compile time")
            regs[ins.dst] = int(input_shapes[ins.input][ins.axis])
        elif t is LoadConst:
            regs[ins.dst] = ins.value
        elif t is ReadScalar:
            regs[ins.dst] = literals[ins.tensor][ins.index]
        elif t is BinOp:
            try:
                regs[ins.dst] = eval_scalar_fn(ins.fn, regs[ins.a], regs[ins.b])
            except (ValueError, ZeroDivisionError) as e:
                raise ShapeMismatchError(f"shape computation failed: {e}") from None
        elif t is BindDim:
            if regs[ins.src] < 0:
                raise ShapeMismatchError(f"negative extent {regs[ins.src]} computed for s{ins.sym}")
            env[ins.sym] = regs[ins.src]
        elif t is AssertDim:
            expect = ins.const if ins.sym is None else env[ins.sym]
            if regs[ins.src] != expect:
                raise ShapeMismatchError(f"{ins.what} is {regs[ins.src]}, expected {expect}")
        else:  # pragma: no cover - closed instruction set
            raise TypeError(f"unknown shape instruction {ins!r}")


def evaluate(prog: ShapeProgram, input_shapes=None, verify: bool = False) -> tuple:
    """Evaluate the program; returns (registers, env mapping sym id -> size)."""
    regs = [0] * prog.num_registers
    env: dict = {}
    execute(prog.instructions, regs, env, prog.literals, input_shapes)
    if verify:
        execute(prog.checks, regs, env, prog.literals, input_shapes)
    return regs, env
