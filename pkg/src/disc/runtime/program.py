"""Host instruction set of the runtime program.

Operands that may be computed at run time are written as ``("reg", n)`` for
a shape register or ``("imm", x)`` for a value folded at compile time.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CodegenError


@dataclass(frozen=True)
class BindInput:
    index: int
    buffer: int
    name: str
    dims: tuple  # int for extents checked on entry, None for extents left to the shape program


@dataclass(frozen=True)
class EvalShape:
    start: int
    end: int
    checks: bool = False  # slice of the verify-only check list


@dataclass(frozen=True)
class Alloc:
    buffer: int
    bytes_coeff: int   # bytes = align16(bytes_coeff * prod(regs))
    regs: tuple


@dataclass(frozen=True)
class Alias:
    buffer: int
    target: int


@dataclass(frozen=True)
class Dealloc:
    buffers: tuple
    retain: tuple  # per buffer: keep the memory for a later Alias


@dataclass(frozen=True)
class SelectVersion:
    kernel: int
    dst: int


@dataclass(frozen=True)
class ComputeLaunch:
    kernel: int
    dst: int
    coeff: int
    regs: tuple


@dataclass(frozen=True)
class Launch:
    kernel: int
    version: tuple   # ("reg", version register) | ("imm", version index)
    launch: tuple    # ("reg", launch register) | ("imm", [tile, ntiles])
    inputs: tuple
    outputs: tuple
    scalars: tuple   # operands feeding slice/pad index slots


@dataclass(frozen=True)
class LibraryCall:
    fn: str
    inputs: tuple
    outputs: tuple
    dims: tuple      # m, k, n operands


@dataclass(frozen=True)
class BindOutput:
    index: int
    buffer: int
    dims: tuple      # ("reg", r) | ("imm", c) per axis


INSTRUCTIONS = {c.__name__: c for c in (
    BindInput, EvalShape, Alloc, Alias, Dealloc, SelectVersion, ComputeLaunch, Launch, LibraryCall, BindOutput)}


def _plain(x):
    if isinstance(x, tuple):
        return [_plain(e) for e in x]
    return x


def _tuple(x):
    if isinstance(x, list):
        return tuple(_tuple(e) for e in x)
    return x


def to_json(ins) -> dict:
    d = {"op": type(ins).__name__}
    d.update({k: _plain(v) for k, v in ins.__dict__.items()})
    return d


def from_json(d: dict):
    d = dict(d)
    cls = INSTRUCTIONS[d.pop("op")]
    return cls(**{k: _tuple(v) for k, v in d.items()})


def operand_regs(x) -> tuple:
    return (x[1],) if x[0] == "reg" else ()


def check_program(instrs, shape_prog, buffers: list) -> None:
    """Static single-pass validity checks; raises :class:`CodegenError`.

    Every register is written before it is read, every launched buffer is
    live, aliases only target retained dead buffers, and graph outputs are
    never deallocated.
    """
    from ..shape_analysis.program import _reads, _writes

    shape_written: set = set()
    vregs: set = set()
    lregs: set = set()
    state: dict = {}  # buffer -> live | dead | retained
    kinds = {b["id"]: b["kind"] for b in buffers}

    def fail(i, msg):
        raise CodegenError(f"runtime instruction {i} ({type(instrs[i]).__name__}): {msg}")

    def need_reg(i, r):
        if r not in shape_written:
            fail(i, f"reads shape register r{r} before it is written")

    def need_live(i, b):
        if state.get(b) != "live":
            fail(i, f"buffer {b} is {state.get(b, 'unallocated')}")

    for i, ins in enumerate(instrs):
        t = type(ins)
        if t is BindInput:
            state[ins.buffer] = "live"
        elif t is EvalShape:
            body = (shape_prog.checks if ins.checks else shape_prog.instructions)[ins.start:ins.end]
            for s in body:
                for r in _reads(s):
                    need_reg(i, r)
                w = _writes(s)
                if w is not None:
                    shape_written.add(w)
        elif t is Alloc:
            for r in ins.regs:
                need_reg(i, r)
            if ins.buffer in state:
                fail(i, f"buffer {ins.buffer} allocated twice")
            state[ins.buffer] = "live"
        elif t is Alias:
            if state.get(ins.target) != "retained":
                fail(i, f"alias target {ins.target} is {state.get(ins.target, 'unallocated')}")
            state[ins.target] = "dead"
            state[ins.buffer] = "live"
        elif t is Dealloc:
            for b, keep in zip(ins.buffers, ins.retain):
                need_live(i, b)
                if kinds.get(b) != "intermediate":
                    fail(i, f"buffer {b} of kind {kinds.get(b)} must not be deallocated")
                state[b] = "retained" if keep else "dead"
        elif t is SelectVersion:
            vregs.add(ins.dst)
        elif t is ComputeLaunch:
            for r in ins.regs:
                need_reg(i, r)
            lregs.add(ins.dst)
        elif t is Launch:
            if ins.version[0] == "reg" and ins.version[1] not in vregs:
                fail(i, f"version register v{ins.version[1]} not written")
            if ins.launch[0] == "reg" and ins.launch[1] not in lregs:
                fail(i, f"launch register l{ins.launch[1]} not written")
            for s in ins.scalars:
                for r in operand_regs(s):
                    need_reg(i, r)
            for b in ins.inputs + ins.outputs:
                need_live(i, b)
        elif t is LibraryCall:
            for s in ins.dims:
                for r in operand_regs(s):
                    need_reg(i, r)
            for b in ins.inputs + ins.outputs:
                need_live(i, b)
        elif t is BindOutput:
            for s in ins.dims:
                for r in operand_regs(s):
                    need_reg(i, r)
            need_live(i, ins.buffer)
    leaked = [b for b, k in kinds.items() if k == "intermediate" and state.get(b) not in ("dead",)]
    if leaked:
        raise CodegenError(f"intermediate buffers never released: {sorted(leaked)}")
