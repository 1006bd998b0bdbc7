"""End-to-end compilation: framework graph to CompiledPlan."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

from . import buffers as bp
from .cache import PlanCache, graph_signature
from .dhlo.ir import DhloGraph, Sym
from .dhlo.passes import CANONICALIZE, DCE, SIMPLIFY_BROADCAST, bind_symbols, run_pipeline
from .dhlo.serialize import to_text
from .errors import CompileError, DiscError, NotStaticError
from .frontend.graph import FrameworkGraph, validate
from .frontend.lower import lower_to_dhlo
from .fusion.planner import fuse
from .fusion.specialize import specialize
from .runtime.codegen import codegen
from .runtime.plan import CompiledPlan
from .shape_analysis.program import emit_shape_program, evaluate
from .shape_analysis.propagation import infer

STAGES = ("lowered", "constraints", "simplified", "fused", "kernels", "shape_program", "buffers", "plan")


@dataclass(frozen=True)
class CompileOptions:
    static_fallback: bool = False
    inject_constraints: bool = True
    fusion: bool = True

    def key(self) -> dict:
        return asdict(self)


@dataclass
class Artifacts:
    """Every intermediate product of one compilation, for inspection and tests."""

    dhlo: DhloGraph = None
    cs: object = None
    groups: list = None
    specs: list = None
    shape_program: object = None
    buffer_plan: object = None
    plan: CompiledPlan = None


class _Stages:
    def __init__(self, on_stage: Callable | None):
        self.on_stage = on_stage
        self.current = "frontend"

    def run(self, name: str, fn, *args):
        self.current = name
        try:
            return fn(*args)
        except CompileError:
            raise
        except DiscError as e:
            raise CompileError(name, e) from e

    def dump(self, name: str, text_fn) -> None:
        if self.on_stage is not None:
            self.on_stage(name, text_fn())


def _describe_groups(groups, specs) -> str:
    lines = []
    for grp, spec in zip(groups, specs):
        lines.append(f"group {grp.id} {grp.root_kind} kernel={spec.name} members={list(grp.members)} "
                     f"inputs={list(grp.inputs)} outputs={list(grp.outputs)}")
    return "\n".join(lines) + "\n"


def _describe_shape_program(sp) -> str:
    from .shape_analysis.program import instr_to_json

    lines = [f"registers={sp.num_registers} bound={ {f's{k}': f'r{v}' for k, v in sorted(sp.bound.items())} }"]
    lines += [f"  [{lvl}] {instr_to_json(i)}" for i, lvl in zip(sp.instructions, sp.levels)]
    lines += [f"  check {instr_to_json(i)}" for i in sp.checks]
    return "\n".join(lines) + "\n"


def _describe_buffers(bplan) -> str:
    lines = []
    for b in bplan.buffers:
        alias = f" alias_of={b.alias_of}" if b.alias_of is not None else ""
        lines.append(f"buffer {b.id} {b.kind} %{b.value} def={b.def_step} last={b.last_use} "
                     f"physical={b.physical}{alias}")
    return "\n".join(lines) + "\n"


def _front(fg: FrameworkGraph, options: CompileOptions, st: _Stages):
    st.run("validate", validate, fg)
    g, seed = st.run("lower", lower_to_dhlo, fg, options.inject_constraints)
    st.dump("lowered", lambda: to_text(g))
    cs = st.run("infer", infer, g, seed)
    st.dump("constraints", cs.describe)
    g, cs = st.run("simplify", run_pipeline, g, cs, [SIMPLIFY_BROADCAST, CANONICALIZE, DCE])
    st.dump("simplified", lambda: to_text(g))
    return g, cs


def _back(g: DhloGraph, cs, options: CompileOptions, st: _Stages, static: bool, meta: dict) -> Artifacts:
    art = Artifacts(dhlo=g, cs=cs)
    _, art.groups = st.run("fuse", fuse, g, cs, options.fusion)
    art.specs = st.run("specialize", specialize, g, art.groups, cs)
    st.dump("fused", lambda: _describe_groups(art.groups, art.specs))
    st.dump("kernels", lambda: "\n".join(repr(s.to_json()) for s in art.specs) + "\n")
    art.shape_program = st.run("shape_program", emit_shape_program, g, cs)
    st.dump("shape_program", lambda: _describe_shape_program(art.shape_program))
    steps = st.run("buffers", bp.schedule, g, art.specs)
    art.buffer_plan = st.run("buffers", bp.plan, g, cs, steps)
    st.dump("buffers", lambda: _describe_buffers(art.buffer_plan))
    art.plan = st.run("codegen", lambda: codegen(g, cs, art.groups, art.specs, art.buffer_plan,
                                                 art.shape_program, static=static, metadata=meta))
    st.dump("plan", art.plan.dumps)
    return art


def _static_graph(g: DhloGraph, cs, st: _Stages) -> tuple:
    for v in g.inputs:
        for d in v.shape:
            if isinstance(d, Sym):
                raise CompileError("static_specialize", NotStaticError(f"not static: {g.symbol_name(d)}"))
    sp = st.run("static_specialize", emit_shape_program, g, cs)
    _, env = st.run("static_specialize", evaluate, sp, None, True)
    bound = bind_symbols(g, env)
    cs2 = st.run("static_specialize", infer, bound)
    return st.run("static_specialize", run_pipeline, bound, cs2, [SIMPLIFY_BROADCAST, CANONICALIZE, DCE])


def compile_uncached(fg: FrameworkGraph, options: CompileOptions = CompileOptions(),
                     on_stage: Callable | None = None) -> Artifacts:
    st = _Stages(on_stage)
    g, cs = _front(fg, options, st)
    meta = {"graph": fg.name, "num_inputs": len(fg.inputs), "num_outputs": len(fg.outputs),
            "signature": graph_signature(fg, options.key()), "options": options.key(),
            "output_names": list(fg.outputs)}
    static = options.static_fallback and all(isinstance(d, int) for t in fg.inputs for d in t.shape)
    if static:
        g, cs = _static_graph(g, cs, st)
    return _back(g, cs, options, st, static, meta)


def static_specialize(g, options: CompileOptions = CompileOptions(), on_stage: Callable | None = None) -> CompiledPlan:
    """Fully static plan for a graph whose input extents are all constants.

    Accepts a framework graph or an already lowered DHLO graph.
    """
    st = _Stages(on_stage)
    if isinstance(g, FrameworkGraph):
        fg = g
        g, cs = _front(fg, options, st)
        meta = {"graph": fg.name, "num_inputs": len(fg.inputs), "num_outputs": len(fg.outputs),
                "signature": graph_signature(fg, options.key()), "options": options.key(),
            "output_names": list(fg.outputs)}
    else:
        cs = st.run("infer", infer, g)
        g, cs = st.run("simplify", run_pipeline, g, cs, [SIMPLIFY_BROADCAST, CANONICALIZE, DCE])
        meta = {"graph": g.name, "num_inputs": len(g.inputs), "num_outputs": len(g.outputs)}
    try:
        g, cs = _static_graph(g, cs, st)
    except CompileError as e:
        if isinstance(e.cause, NotStaticError):
            raise e.cause from None
        raise
    return _back(g, cs, options, st, True, meta).plan


def dump_writer(directory) -> Callable:
    """``on_stage`` callback writing ``NN_<stage>.txt`` files."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    counter = [0]

    def write(name: str, text: str) -> None:
        (path / f"{counter[0]:02d}_{name}.txt").write_text(text, encoding="utf-8")
        counter[0] += 1

    return write


DEFAULT_CACHE = PlanCache()


def compile(fg: FrameworkGraph, options: CompileOptions = CompileOptions(), cache: PlanCache | None = None,
            on_stage: Callable | None = None) -> CompiledPlan:
    """Compile through ``cache`` (the process-wide cache by default)."""
    cache = DEFAULT_CACHE if cache is None else cache
    if on_stage is None and os.environ.get("DISC_DUMP_DIR"):
        on_stage = dump_writer(os.environ["DISC_DUMP_DIR"])
    key = graph_signature(fg, options.key())
    return cache.get_or_compile(key, lambda: compile_uncached(fg, options, on_stage).plan)
