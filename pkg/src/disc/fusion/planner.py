"""Constraint-driven fusion of memory-intensive ops.

Groups grow greedily from the last unclaimed fusible op backwards.  A
neighbour is absorbed when the enlarged group is still one of the two loop
templates (elementwise loop, or input fusion rooted at a single reduce) and
stays convex; when absorbing a neighbour alone would break convexity, the
ops on the offending paths are absorbed with it if they are all fusible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..dhlo.ir import ELEMENTWISE, DhloGraph

LOOP = "elementwise-loop"
REDUCE_ROOT = "reduce-root"
SINGLE = "single-op"

FUSIBLE = ELEMENTWISE | {"dynamic_broadcast_in_dim", "reduce"}
LIBRARY = frozenset({"matmul"})


@dataclass(frozen=True)
class FusionGroup:
    id: int
    members: tuple       # op ids in topological order
    root_kind: str
    root: str            # the reduce for reduce-root groups, else the last member
    inputs: tuple        # external data values, in first-use order
    outputs: tuple       # member values read outside the group or returned by the graph
    signature: str

    def to_json(self) -> dict:
        return {
            "id": self.id, "members": list(self.members), "root_kind": self.root_kind, "root": self.root,
            "inputs": list(self.inputs), "outputs": list(self.outputs), "signature": self.signature,
        }

    @staticmethod
    def from_json(d: dict) -> "FusionGroup":
        return FusionGroup(d["id"], tuple(d["members"]), d["root_kind"], d["root"], tuple(d["inputs"]),
                           tuple(d["outputs"]), d["signature"])


class _Graph:
    """Data-dependence view of the data ops with bitset reachability."""

    def __init__(self, g: DhloGraph):
        self.g = g
        self.ops = g.data_ops()
        self.index = {op.id: i for i, op in enumerate(self.ops)}
        self.by_id = {op.id: op for op in self.ops}
        n = len(self.ops)
        self.producers = [[self.index[a] for a in dict.fromkeys(op.data_inputs) if a in self.index]
                          for op in self.ops]
        self.consumers = [[] for _ in range(n)]
        for i, ps in enumerate(self.producers):
            for p in ps:
                self.consumers[p].append(i)
        self.desc = [0] * n  # strict descendants
        for i in reversed(range(n)):
            m = 0
            for c in self.consumers[i]:
                m |= (1 << c) | self.desc[c]
            self.desc[i] = m
        self.anc = [0] * n
        for i in range(n):
            m = 0
            for p in self.producers[i]:
                m |= (1 << p) | self.anc[p]
            self.anc[i] = m

    def hull(self, mask: int) -> int:
        """Smallest convex superset of ``mask``."""
        below = 0
        above = 0
        m = mask
        while m:
            low = m & -m
            i = low.bit_length() - 1
            below |= self.desc[i]
            above |= self.anc[i]
            m ^= low
        return mask | (below & above)


def _members(mask: int) -> list:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class _Validity:
    def __init__(self, view: _Graph, cs):
        self.v = view
        self.cs = cs

    def shape(self, i):
        return self.v.ops[i].shape

    def same(self, a, b) -> bool:
        return self.cs.same_dims(a, b)

    def ok(self, mask: int) -> bool:
        idx = _members(mask)
        ops = [self.v.ops[i] for i in idx]
        reduces = [i for i, op in zip(idx, ops) if op.kind == "reduce"]
        if len(reduces) > 1:
            return False
        if not reduces:
            ref = self.shape(idx[0])
            return all(self.same(self.shape(i), ref) for i in idx)
        return self._reduce_ok(reduces[0], idx, mask)

    def _reduce_ok(self, r: int, idx: list, mask: int) -> bool:
        v = self.v
        rop = v.ops[r]
        d_in = v.g.shape(rop.inputs[0])
        d_out = rop.shape
        upstream = [i for i in idx if v.anc[r] >> i & 1]
        if not all(self.same(self.shape(i), d_in) for i in upstream):
            return False
        down = [i for i in idx if i != r and not (v.anc[r] >> i & 1)]
        if not down:
            return True
        kept = [a for a in range(len(d_in)) if a not in rop.attrs["axes"]]
        ew = [i for i in down if v.ops[i].kind in ELEMENTWISE]
        bcasts = [i for i in down if v.ops[i].kind == "dynamic_broadcast_in_dim"]
        if len(ew) + len(bcasts) != len(down) or len(ew) > 1:
            return False
        row_b = [i for i in bcasts if v.producers[i] == [r]]
        if len(row_b) > 1:
            return False
        if row_b:
            b = v.ops[row_b[0]]
            if b.attrs["broadcast_dims"] != kept or not self.same(b.shape, d_in):
                return False
        if not ew:
            return len(bcasts) == len(row_b) == 1
        e = ew[0]
        eop = v.ops[e]
        others = [i for i in bcasts if i not in row_b]
        if any(v.producers[i] and mask >> v.producers[i][0] & 1 for i in others):
            return False  # extra broadcasts must read values from outside the group
        if row_b:
            domain = d_in
            if row_b[0] not in v.producers[e]:
                return False
            allowed = set(upstream) | set(row_b) | set(others)
        else:
            domain = d_out
            if r not in v.producers[e]:
                return False
            allowed = {r} | set(others)
        if not self.same(eop.shape, domain):
            return False
        if not all(self.same(self.shape(i), domain) for i in others):
            return False
        for a in eop.data_inputs:
            j = v.index.get(a)
            if j is not None and mask >> j & 1:
                if j not in allowed:
                    return False
            elif not self.same(v.g.shape(a), domain):
                return False
        return True


def _group_io(view: _Graph, members: list) -> tuple:
    g = view.g
    ids = [view.ops[i].id for i in members]
    inside = set(ids)
    inputs = []
    for vid in ids:
        for a in view.by_id[vid].data_inputs:
            producer = g.producer(a)
            if producer is not None and producer.kind == "constant":
                continue  # literals are inlined into the kernel
            if a not in inside and a not in inputs:
                inputs.append(a)
    graph_outputs = set(g.outputs)
    outputs = []
    for vid in ids:
        users = [u for u in g.users(vid) if u.is_data_op and u.id not in inside]
        if users or vid in graph_outputs:
            outputs.append(vid)
    return tuple(inputs), tuple(outputs)


def signature(g: DhloGraph, members, root_kind: str) -> str:
    """Shape-agnostic digest of a group: kinds, ranks, axes, perms and local wiring."""
    local = {vid: i for i, vid in enumerate(members)}
    ext: dict = {}
    items = []
    for vid in members:
        op = g.producer(vid)
        args = []
        for a in op.data_inputs:
            if a in local:
                args.append(f"v{local[a]}")
            else:
                ext.setdefault(a, len(ext))
                args.append(f"x{ext[a]}:r{len(g.shape(a))}")
        attrs = {k: v for k, v in sorted(op.attrs.items())}
        if op.kind == "constant":
            attrs = {}
        items.append([op.kind, len(op.shape), args, attrs])
    doc = json.dumps([root_kind, items], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def fuse(g: DhloGraph, cs, enabled: bool = True):
    """Partition the data ops into kernels; returns ``(g, groups)``.

    Library ops (matmul) are left out of every group.  Non-fusible data ops
    that still need a kernel become single-op groups.
    """
    view = _Graph(g)
    valid = _Validity(view, cs)
    n = len(view.ops)
    claimed = 0
    found = []
    for start in reversed(range(n)):
        op = view.ops[start]
        if claimed >> start & 1 or op.kind in LIBRARY:
            continue
        mask = 1 << start
        if op.kind in FUSIBLE and enabled:
            mask = _grow(view, valid, mask, claimed)
        claimed |= mask
        found.append(mask)
    found.sort(key=lambda m: (m & -m).bit_length())
    groups = []
    for gid, mask in enumerate(found):
        idx = _members(mask)
        ops = [view.ops[i] for i in idx]
        reduces = [o.id for o in ops if o.kind == "reduce"]
        if ops[0].kind not in FUSIBLE:
            kind = SINGLE
        else:
            kind = REDUCE_ROOT if reduces else LOOP
        root = reduces[0] if reduces else ops[-1].id
        members = tuple(o.id for o in ops)
        inputs, outputs = _group_io(view, idx)
        groups.append(FusionGroup(gid, members, kind, root, inputs, outputs, signature(g, members, kind)))
    return g, groups


def _grow(view: _Graph, valid: _Validity, mask: int, claimed: int) -> int:
    while True:
        cands = set()
        for i in _members(mask):
            cands.update(view.producers[i])
            cands.update(view.consumers[i])
        grown = False
        for c in sorted(cands):
            if mask >> c & 1 or claimed >> c & 1 or view.ops[c].kind not in FUSIBLE:
                continue
            new = view.hull(mask | (1 << c))
            if new & claimed:
                continue
            if any(view.ops[i].kind not in FUSIBLE for i in _members(new & ~mask)):
                continue
            if valid.ok(new):
                mask = new
                grown = True
                break
        if not grown:
            return mask


def is_convex(g: DhloGraph, members) -> bool:
    view = _Graph(g)
    mask = 0
    for vid in members:
        mask |= 1 << view.index[vid]
    return view.hull(mask) == mask
