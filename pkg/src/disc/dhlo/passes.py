"""Pass-manager scaffold and the graph-level rewrite passes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..errors import DiscError, PassError
from .ir import DhloGraph, Sym
from .verify import Diagnostic, verify


@dataclass(frozen=True)
class Pass:
    """A named graph transform ``fn(g, cs) -> (g, cs)``."""

    name: str
    fn: Callable

    def __call__(self, g, cs):
        return self.fn(g, cs)


def run_pipeline(g: DhloGraph, cs, passes, on_stage: Callable | None = None):
    """Apply ``passes`` in order, verifying after each one.

    ``on_stage(name, g, cs)`` is called after every successful pass so that
    stages can be dumped by name.
    """
    for p in passes:
        try:
            g, cs = p(g, cs)
        except PassError:
            raise
        except DiscError as e:
            raise PassError(p.name, [Diagnostic("", f"{type(e).__name__}: {e}")]) from e
        diags = verify(g)
        if diags:
            raise PassError(p.name, diags)
        if on_stage is not None:
            on_stage(p.name, g, cs)
    return g, cs


def _rename(g: DhloGraph, mapping: dict, drop: set) -> DhloGraph:
    ops = tuple(
        op.with_(inputs=tuple(mapping.get(a, a) for a in op.inputs))
        for op in g.ops if op.id not in drop
    )
    outputs = tuple(mapping.get(o, o) for o in g.outputs)
    return g.replace(ops=ops, outputs=outputs)


def dead_code_elimination(g: DhloGraph) -> DhloGraph:
    live = set(g.outputs)
    for op in reversed(g.ops):
        if op.id in live:
            live.update(op.inputs)
    ops = tuple(op for op in g.ops if op.id in live)
    if len(ops) == len(g.ops):
        return g
    return g.replace(ops=ops)


def simplify_broadcast(g: DhloGraph, cs) -> DhloGraph:
    """Drop every broadcast whose operand provably already has the result's dims."""
    mapping: dict = {}
    drop: set = set()
    for op in g.ops:
        if op.kind != "dynamic_broadcast_in_dim":
            continue
        src = mapping.get(op.inputs[0], op.inputs[0])
        in_shape = g.shape(src)
        if (len(in_shape) == len(op.shape)
                and op.attrs["broadcast_dims"] == list(range(len(op.shape)))
                and cs.same_dims(in_shape, op.shape)):
            mapping[op.id] = src
            drop.add(op.id)
    if not drop:
        return g
    return dead_code_elimination(_rename(g, mapping, drop))


def canonicalize_dims(g: DhloGraph, cs) -> DhloGraph:
    """Rewrite every dim to its class representative; dims proven constant become ints."""
    return g.map_shapes(lambda d: cs.find(d) if isinstance(d, Sym) else d)


def bind_symbols(g: DhloGraph, env: dict) -> DhloGraph:
    """Replace symbols by the sizes in ``env`` (sym id -> int); others are kept."""
    return g.map_shapes(lambda d: env.get(d.id, d) if isinstance(d, Sym) else d)


SIMPLIFY_BROADCAST = Pass("simplify_broadcast", lambda g, cs: (simplify_broadcast(g, cs), cs))
CANONICALIZE = Pass("canonicalize", lambda g, cs: (canonicalize_dims(g, cs), cs))
DCE = Pass("dce", lambda g, cs: (dead_code_elimination(g), cs))
