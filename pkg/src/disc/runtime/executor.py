"""Executes a CompiledPlan: a linear walk over its host instructions.

The executor never sees a graph.  Each :meth:`Executor.run` call uses a
fresh register file and buffer table; the cached allocator lives as long as
the executor, so repeated runs hit its free lists.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..buffers import align
from ..dhlo.ir import dim_from_json
from ..errors import ExecutionError, ShapeMismatchError
from ..fusion.specialize import launch_config, resolve, select_version
from ..shape_analysis.program import execute as exec_shape
from . import library
from . import program as rp
from .allocator import CachedAllocator
from .kernels import run_kernel
from .plan import CompiledPlan


@dataclass
class Trace:
    """Per-run buffer events, indexed by runtime instruction position."""

    block: dict = field(default_factory=dict)     # buffer -> physical block id
    defined: dict = field(default_factory=dict)   # buffer -> first writing instruction
    last_use: dict = field(default_factory=dict)  # buffer -> last reading instruction
    dealloc: dict = field(default_factory=dict)   # buffer -> Dealloc instruction
    kinds: dict = field(default_factory=dict)
    retained: set = field(default_factory=set)    # deallocated buffers whose block awaits an Alias

    def intervals(self) -> list:
        out = []
        for b, blk in self.block.items():
            if self.kinds.get(b) == "input":
                continue
            start = self.defined.get(b)
            end = max(self.last_use.get(b, start), start)
            out.append((b, blk, start, end))
        return out

    def overlaps(self) -> list:
        """Pairs of buffers that share a block while both are live."""
        by_block: dict = {}
        for b, blk, s, e in self.intervals():
            by_block.setdefault(blk, []).append((s, e, b))
        bad = []
        for ivs in by_block.values():
            ivs.sort()
            for (s1, e1, b1), (s2, e2, b2) in zip(ivs, ivs[1:]):
                if s2 <= e1:
                    bad.append((b1, b2))
        return bad

    def late_deallocs(self) -> list:
        """Intermediates whose Dealloc does not directly follow their last use."""
        return [b for b, d in self.dealloc.items() if d != self.last_use.get(b, self.defined.get(b)) + 1]


@dataclass
class RunStats:
    launch_count: int = 0
    library_calls: int = 0
    host_instructions: int = 0
    peak_bytes: int = 0
    alloc_calls: int = 0
    allocator_cache_hits: int = 0
    aliased_allocs: int = 0
    wall_time: float = 0.0
    kernel_time: float = 0.0
    versions: dict = field(default_factory=dict)   # kernel id -> selected version index
    library_impls: list = field(default_factory=list)
    trace: Trace | None = None

    @property
    def host_time(self) -> float:
        return max(self.wall_time - self.kernel_time, 0.0)

    def as_dict(self) -> dict:
        return {
            "launch_count": self.launch_count, "library_calls": self.library_calls,
            "host_instruction_count": self.host_instructions, "peak_bytes": self.peak_bytes,
            "alloc_calls": self.alloc_calls, "allocator_cache_hits": self.allocator_cache_hits,
            "aliased_allocs": self.aliased_allocs,
        }


def _prod(xs) -> int:
    n = 1
    for x in xs:
        n *= x
    return n


class Executor:
    def __init__(self, plan: CompiledPlan, *, verify: bool = False, instrument: bool = False,
                 force_version: int | None = None):
        self.plan = plan
        self.verify = verify
        self.instrument = instrument
        self.force_version = force_version  # run kernels with this version (-1: catch-all) where its guard allows
        self.allocator = CachedAllocator()
        self.kernels = {k.id: k for k in plan.kernels}
        self.buffer_dims = {b["id"]: tuple(dim_from_json(d) for d in b["shape"]) for b in plan.buffers}
        self.buffer_kind = {b["id"]: b["kind"] for b in plan.buffers}
        self.last_stats: RunStats | None = None

    def _operand(self, x, regs):
        return regs[x[1]] if x[0] == "reg" else x[1]

    def run(self, inputs) -> list:
        plan = self.plan
        if isinstance(inputs, dict):
            missing = [i["id"] for i in plan.inputs if i["id"] not in inputs]
            if missing:
                raise ExecutionError(f"missing binding for input {missing[0]}")
            inputs = [inputs[i["id"]] for i in plan.inputs]
        if len(inputs) != len(plan.inputs):
            raise ExecutionError(f"plan takes {len(plan.inputs)} inputs, got {len(inputs)}")
        sp = plan.shape_program
        regs = [0] * sp.num_registers
        env: dict = {}
        vregs = [0] * plan.num_version_regs
        lregs = [(0, 0)] * plan.num_launch_regs
        bufs: dict = {}
        blocks: dict = {}
        in_shapes: list = [None] * len(inputs)
        stats = RunStats()
        trace = Trace(kinds=dict(self.buffer_kind)) if self.instrument else None
        alloc = self.allocator
        alloc.reset_peak()
        calls0, hits0 = alloc.alloc_calls, alloc.cache_hits
        outputs: list = [None] * len(plan.outputs)
        t0 = time.perf_counter()
        kernel_time = 0.0

        def nelems(b):
            return _prod(resolve(self.buffer_dims[b], env))

        for pc, ins in enumerate(plan.program):
            t = type(ins)
            stats.host_instructions += 1
            if t is rp.BindInput:
                arr = np.require(np.asarray(inputs[ins.index], dtype=np.float32), requirements="C")
                if arr.ndim != len(ins.dims):
                    raise ShapeMismatchError(f"input {ins.name}: rank {arr.ndim}, plan expects {len(ins.dims)}")
                for axis, (want, got) in enumerate(zip(ins.dims, arr.shape)):
                    if want is not None and want != got:
                        raise ShapeMismatchError(f"input {ins.name}[{axis}] is {got}, expected {want}")
                in_shapes[ins.index] = arr.shape
                bufs[ins.buffer] = arr.reshape(-1)
                if trace:
                    trace.block[ins.buffer] = ("input", ins.index)
                    trace.defined[ins.buffer] = pc
            elif t is rp.EvalShape:
                if ins.checks:
                    if not self.verify:
                        stats.host_instructions -= 1
                        continue
                    body = sp.checks
                else:
                    body = sp.instructions
                stats.host_instructions += ins.end - ins.start - 1
                exec_shape(body[ins.start:ins.end], regs, env, sp.literals, in_shapes)
            elif t is rp.Alloc:
                nbytes = ins.bytes_coeff * _prod(regs[r] for r in ins.regs)
                block = alloc.alloc(align(nbytes))
                blocks[ins.buffer] = block
                bufs[ins.buffer] = block.data[:nelems(ins.buffer)]
                if trace:
                    trace.block[ins.buffer] = block.id
            elif t is rp.Alias:
                block = blocks.pop(ins.target)
                blocks[ins.buffer] = block
                bufs[ins.buffer] = block.data[:nelems(ins.buffer)]
                stats.aliased_allocs += 1
                if trace:
                    trace.block[ins.buffer] = block.id
            elif t is rp.Dealloc:
                for b, keep in zip(ins.buffers, ins.retain):
                    del bufs[b]
                    if not keep:
                        alloc.free(blocks.pop(b))
                    if trace:
                        trace.dealloc[b] = pc
                        if keep:
                            trace.retained.add(b)
            elif t is rp.SelectVersion:
                versions = self.kernels[ins.kernel].versions
                chosen = select_version(versions, env)
                if self.force_version is not None:
                    forced = len(versions) - 1 if self.force_version < 0 else self.force_version
                    if forced < len(versions) and versions[forced].passes(env):
                        chosen = forced
                vregs[ins.dst] = chosen
            elif t is rp.ComputeLaunch:
                lregs[ins.dst] = launch_config(ins.coeff * _prod(regs[r] for r in ins.regs))
            elif t is rp.Launch:
                spec = self.kernels[ins.kernel]
                version = vregs[ins.version[1]] if ins.version[0] == "reg" else ins.version[1]
                launch = lregs[ins.launch[1]] if ins.launch[0] == "reg" else tuple(ins.launch[1])
                scalars = [self._operand(s, regs) for s in ins.scalars]
                k0 = time.perf_counter()
                run_kernel(spec, version, launch, [bufs[b] for b in ins.inputs], [bufs[b] for b in ins.outputs],
                           env, scalars)
                kernel_time += time.perf_counter() - k0
                stats.launch_count += 1
                stats.versions[spec.id] = version
                if trace:
                    self._touch(trace, pc, ins.inputs, ins.outputs)
            elif t is rp.LibraryCall:
                m, k, n = (self._operand(d, regs) for d in ins.dims)
                a = bufs[ins.inputs[0]].reshape(m, k)
                b = bufs[ins.inputs[1]].reshape(k, n)
                k0 = time.perf_counter()
                r, key = library.call_matmul(a, b)
                kernel_time += time.perf_counter() - k0
                bufs[ins.outputs[0]][:] = r.reshape(-1)
                stats.library_calls += 1
                stats.library_impls.append(key)
                if trace:
                    self._touch(trace, pc, ins.inputs, ins.outputs)
            elif t is rp.BindOutput:
                dims = [self._operand(d, regs) for d in ins.dims]
                data = bufs[ins.buffer]
                if self.buffer_kind[ins.buffer] == "input":
                    data = data.copy()
                outputs[ins.index] = data.reshape(dims)
                if trace:
                    self._touch(trace, pc, (ins.buffer,), ())
            else:  # pragma: no cover - closed instruction set
                raise ExecutionError(f"unknown runtime instruction {ins!r}")
        for b, block in blocks.items():
            if self.buffer_kind[b] == "output":
                alloc.release(block)
        stats.wall_time = time.perf_counter() - t0
        stats.kernel_time = kernel_time
        stats.peak_bytes = alloc.peak_bytes
        stats.alloc_calls = alloc.alloc_calls - calls0
        stats.allocator_cache_hits = alloc.cache_hits - hits0
        stats.trace = trace
        self.last_stats = stats
        return outputs

    @staticmethod
    def _touch(trace: Trace, pc: int, reads, writes) -> None:
        for b in writes:
            trace.defined.setdefault(b, pc)
        for b in reads:
            trace.last_use[b] = pc


def run_plan(plan: CompiledPlan, inputs, **kw) -> tuple:
    ex = Executor(plan, **kw)
    out = ex.run(inputs)
    return out, ex.last_stats
