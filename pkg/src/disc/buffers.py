"""Liveness-based buffer planning over the kernel schedule.

Every value that crosses a kernel boundary gets a logical buffer.  An
allocation is turned into an alias of an already-dead buffer when the
constraint set proves both hold the same number of elements; the first such
buffer in dealloc order wins.  Graph outputs are never taken from, nor
returned to, the reuse pool.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .dhlo.ir import DhloGraph

ALIGNMENT = 16
ELEMENT_BYTES = 4


def align(nbytes: int) -> int:
    return -(-nbytes // ALIGNMENT) * ALIGNMENT


@dataclass(frozen=True)
class Step:
    kind: str       # "launch" or "library"
    ref: int | str  # kernel id, or the library op id
    inputs: tuple
    outputs: tuple


@dataclass
class Buffer:
    id: int
    value: str
    shape: tuple
    kind: str                   # input | intermediate | output
    def_step: int = -1
    last_use: int = -1
    physical: int = -1
    alias_of: int | None = None  # logical buffer whose memory is reused
    retain: bool = False         # memory kept for a later alias when deallocated


@dataclass
class BufferPlan:
    schedule: list
    buffers: list
    by_value: dict
    allocs_before: dict = field(default_factory=dict)   # step -> [buffer ids]
    deallocs_after: dict = field(default_factory=dict)  # step -> [buffer ids]

    @property
    def aliased(self) -> list:
        return [b for b in self.buffers if b.alias_of is not None]

    def intervals(self) -> list:
        return [(b.id, b.physical, b.def_step, b.last_use) for b in self.buffers if b.kind != "input"]

    def peak_buffer_count(self) -> int:
        """Maximum number of physical buffers simultaneously reserved."""
        live, peak = set(), 0
        for s in range(len(self.schedule)):
            for bid in self.allocs_before.get(s, []):
                live.add(self.buffers[bid].physical)
            peak = max(peak, len(live))
            for bid in self.deallocs_after.get(s, []):
                b = self.buffers[bid]
                if not b.retain:
                    live.discard(b.physical)
        return peak


def schedule(g: DhloGraph, specs) -> list:
    """Kernel and library steps in dependence order, earliest original op first."""
    order = {op.id: i for i, op in enumerate(g.data_ops())}
    steps = []
    for s in specs:
        steps.append((min(order[m] for m in s.group.members),
                      Step("launch", s.id, tuple(s.group.inputs), tuple(s.group.outputs))))
    for op in g.data_ops():
        if op.kind == "matmul":
            steps.append((order[op.id], Step("library", op.id, tuple(op.inputs), (op.id,))))
    producer = {}
    for i, (_, st) in enumerate(steps):
        for v in st.outputs:
            producer[v] = i
    deps = [set() for _ in steps]
    users = [set() for _ in steps]
    for i, (_, st) in enumerate(steps):
        for v in st.inputs:
            if v in producer:
                deps[i].add(producer[v])
                users[producer[v]].add(i)
    ready = [(prio, i) for i, (prio, _) in enumerate(steps) if not deps[i]]
    heapq.heapify(ready)
    out = []
    while ready:
        _, i = heapq.heappop(ready)
        out.append(steps[i][1])
        for u in sorted(users[i]):
            deps[u].discard(i)
            if not deps[u]:
                heapq.heappush(ready, (steps[u][0], u))
    if len(out) != len(steps):
        raise AssertionError("kernel schedule has a cycle")  # pragma: no cover - fusion keeps groups convex
    return out


def plan(g: DhloGraph, cs, steps: list) -> BufferPlan:
    buffers: list = []
    by_value: dict = {}
    outputs = set(g.outputs)
    for v in g.inputs:
        b = Buffer(len(buffers), v.id, tuple(v.shape), "input", physical=len(buffers))
        buffers.append(b)
        by_value[v.id] = b.id
    for s, st in enumerate(steps):
        for v in st.outputs:
            kind = "output" if v in outputs else "intermediate"
            b = Buffer(len(buffers), v, tuple(g.shape(v)), kind, def_step=s)
            buffers.append(b)
            by_value[v] = b.id
        for v in st.inputs:
            if v in by_value:
                buffers[by_value[v]].last_use = s
    allocs: dict = {}
    deallocs: dict = {}
    dead: list = []  # intermediate buffers whose memory can be reused, in dealloc order
    next_physical = len(g.inputs)
    for s, st in enumerate(steps):
        for v in st.outputs:
            b = buffers[by_value[v]]
            allocs.setdefault(s, []).append(b.id)
            if b.kind == "intermediate":
                hit = next((d for d in dead if cs.same_size(buffers[d].shape, b.shape)), None)
                if hit is not None:
                    dead.remove(hit)
                    b.alias_of = hit
                    b.physical = buffers[hit].physical
                    buffers[hit].retain = True
                    continue
            b.physical = next_physical
            next_physical += 1
        for v in st.outputs:
            b = buffers[by_value[v]]
            if b.last_use < 0 and b.kind == "intermediate":
                b.last_use = s  # produced for a consumer outside the data path
        for b in buffers:
            if b.kind == "intermediate" and b.last_use == s:
                deallocs.setdefault(s, []).append(b.id)
                dead.append(b.id)
    return BufferPlan(steps, buffers, by_value, allocs, deallocs)


def byte_size(shape, env: dict) -> int:
    n = ELEMENT_BYTES
    for d in shape:
        n *= d if isinstance(d, int) else env[d.id]
    return align(n)
