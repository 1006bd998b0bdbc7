"""Generation of the host runtime program from the fused, planned graph."""

from __future__ import annotations

from ..buffers import ELEMENT_BYTES, BufferPlan, align
from ..dhlo.ir import DhloGraph, Sym, dim_to_json
from ..errors import CodegenError, NotStaticError
from ..fusion.specialize import launch_config, resolve, select_version
from ..shape_analysis.program import ShapeProgram, evaluate
from . import program as rp
from .plan import CompiledPlan


class _Gen:
    def __init__(self, g: DhloGraph, specs: list, bplan: BufferPlan, sp: ShapeProgram, static: bool):
        self.g = g
        self.specs = {s.id: s for s in specs}
        self.bplan = bplan
        self.sp = sp
        self.static = static
        self.regs: list = []
        self.env: dict = {}
        if static:
            if any(isinstance(d, Sym) for v in g.inputs for d in v.shape):
                raise NotStaticError("static code generation needs constant input shapes")
            self.regs, self.env = evaluate(sp, None, verify=True)
        self.out: list = []
        self.nv = 0
        self.nl = 0

    def dim(self, d) -> tuple:
        if not isinstance(d, Sym):
            return ("imm", d)
        if d.id not in self.sp.bound:
            raise CodegenError(f"dimension {d!r} has no shape register")
        return ("reg", self.sp.bound[d.id])

    def product(self, dims, scale: int) -> tuple:
        coeff, regs = scale, []
        for d in dims:
            op = self.dim(d)
            if op[0] == "imm":
                coeff *= op[1]
            else:
                regs.append(op[1])
        return coeff, tuple(sorted(regs))

    def emit(self, ins) -> None:
        self.out.append(ins)

    def shape_segments(self) -> None:
        if self.static:
            return
        segs = self.sp.segments()
        by_level: dict = {}
        for lvl, start, end in segs:
            by_level.setdefault(lvl, []).append((start, end))
        for start, end in by_level.pop(-1, []):
            self.emit(rp.EvalShape(start, end))
        for i, v in enumerate(self.g.inputs):
            b = self.bplan.by_value[v.id]
            self.emit(rp.BindInput(i, b, v.id, tuple(None if isinstance(d, Sym) else d for d in v.shape)))
            for start, end in by_level.pop(i, []):
                self.emit(rp.EvalShape(start, end))
        if self.sp.checks:
            self.emit(rp.EvalShape(0, len(self.sp.checks), checks=True))

    def bind_inputs_static(self) -> None:
        for i, v in enumerate(self.g.inputs):
            self.emit(rp.BindInput(i, self.bplan.by_value[v.id], v.id, tuple(v.shape)))

    def allocs(self, s: int) -> None:
        for bid in self.bplan.allocs_before.get(s, []):
            b = self.bplan.buffers[bid]
            if b.alias_of is not None:
                self.emit(rp.Alias(bid, b.alias_of))
                continue
            coeff, regs = self.product(b.shape, ELEMENT_BYTES)
            if not regs:
                coeff = align(coeff)
            self.emit(rp.Alloc(bid, coeff, regs))

    def launch(self, step) -> None:
        spec = self.specs[step.ref]
        ins = tuple(self.bplan.by_value[v] for v in step.inputs)
        outs = tuple(self.bplan.by_value[v] for v in step.outputs)
        scalars = []
        for vid, elem in spec.scalar_sources:
            r = self.sp.operand_regs[vid][elem]
            scalars.append(("imm", self.regs[r]) if self.static else ("reg", r))
        if self.static:
            version = ("imm", select_version(spec.versions, self.env))
            total = 1
            for x in resolve(spec.domain, self.env):
                total *= x
            launch = ("imm", list(launch_config(total)))
        else:
            vreg, lreg = self.nv, self.nl
            self.nv += 1
            self.nl += 1
            self.emit(rp.SelectVersion(spec.id, vreg))
            coeff, regs = self.product(spec.domain, 1)
            self.emit(rp.ComputeLaunch(spec.id, lreg, coeff, regs))
            version, launch = ("reg", vreg), ("reg", lreg)
        self.emit(rp.Launch(spec.id, version, _tuple(launch), ins, outs, tuple(scalars)))

    def library(self, step) -> None:
        a, b = (self.g.shape(v) for v in step.inputs)
        dims = (self.dim(a[0]), self.dim(a[1]), self.dim(b[1]))
        self.emit(rp.LibraryCall("matmul", tuple(self.bplan.by_value[v] for v in step.inputs),
                                 (self.bplan.by_value[step.outputs[0]],), dims))

    def run(self) -> list:
        if self.static:
            self.bind_inputs_static()
        else:
            self.shape_segments()
        for s, step in enumerate(self.bplan.schedule):
            self.allocs(s)
            if step.kind == "launch":
                self.launch(step)
            else:
                self.library(step)
            dead = self.bplan.deallocs_after.get(s, [])
            if dead:
                self.emit(rp.Dealloc(tuple(dead), tuple(self.bplan.buffers[d].retain for d in dead)))
        for i, vid in enumerate(self.g.outputs):
            self.emit(rp.BindOutput(i, self.bplan.by_value[vid], tuple(self.dim(d) for d in self.g.shape(vid))))
        return self.out


def _tuple(x):
    return tuple(_tuple(e) for e in x) if isinstance(x, (list, tuple)) else x


def buffer_table(bplan: BufferPlan) -> list:
    return [{"id": b.id, "value": b.value, "kind": b.kind, "shape": [dim_to_json(d) for d in b.shape],
             "physical": b.physical} for b in bplan.buffers]


def codegen(g: DhloGraph, cs, groups, specs: list, bplan: BufferPlan, sp: ShapeProgram, *, static: bool = False,
            metadata: dict | None = None) -> CompiledPlan:
    gen = _Gen(g, specs, bplan, sp, static)
    instrs = gen.run()
    table = buffer_table(bplan)
    rp.check_program(instrs, sp, table)
    if static:
        sp = ShapeProgram([], [], 0, {}, {}, {}, [])
    meta = dict(metadata or {})
    meta.setdefault("graph", g.name)
    meta["static"] = static
    return CompiledPlan(
        metadata=meta,
        inputs=[{"id": v.id, "shape": [dim_to_json(d) for d in v.shape]} for v in g.inputs],
        outputs=[{"id": o, "name": name, "shape": [dim_to_json(d) for d in g.shape(o)]}
                 for o, name in zip(g.outputs, meta.get("output_names", g.outputs))],
        shape_program=sp,
        kernels=list(specs),
        program=instrs,
        buffers=table,
        num_version_regs=gen.nv,
        num_launch_regs=gen.nl,
        symbols={sid: g.symbol_name(Sym(sid)) for sid in sorted(sp.bound)},
    )
