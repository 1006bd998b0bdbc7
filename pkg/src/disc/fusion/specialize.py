"""Kernel specialization: loop-nest descriptions, speculative versions and guards."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..dhlo.ir import ELEMENTWISE, DhloGraph, Sym, dim_from_json, dim_to_json
from .planner import LOOP, REDUCE_ROOT, SINGLE, FusionGroup

VECTOR_WIDTH = 4
TILE_SMALL = 256
TILE_LARGE = 1024
TILE_THRESHOLD = 1 << 16


def _dims_json(dims) -> list:
    return [dim_to_json(d) for d in dims]


def _dims_from(dims) -> tuple:
    return tuple(dim_from_json(d) for d in dims)


def resolve(dims, env: dict) -> list:
    """Concrete sizes of ``dims`` given ``env`` (sym id -> size)."""
    return [env[d.id] if isinstance(d, Sym) else d for d in dims]


def _prod(xs) -> int:
    n = 1
    for x in xs:
        n *= x
    return n


# -- guards ----------------------------------------------------------------------

def eval_test(test: dict, env: dict) -> bool:
    if test["test"] == "divisible":
        return _prod(resolve(test["dims"], env)) % test["by"] == 0
    if test["test"] == "dims_equal":
        return all(resolve(a, env) == resolve(b, env) for a, b in test["pairs"])
    raise ValueError(f"unknown guard test {test['test']!r}")


def _test_json(test: dict) -> dict:
    if test["test"] == "divisible":
        return {"test": "divisible", "dims": _dims_json(test["dims"]), "by": test["by"]}
    return {"test": "dims_equal", "pairs": [[_dims_json(a), _dims_json(b)] for a, b in test["pairs"]]}


def _test_from(d: dict) -> dict:
    if d["test"] == "divisible":
        return {"test": "divisible", "dims": _dims_from(d["dims"]), "by": d["by"]}
    return {"test": "dims_equal", "pairs": [(_dims_from(a), _dims_from(b)) for a, b in d["pairs"]]}


@dataclass(frozen=True)
class Version:
    id: int
    name: str
    vectorized: bool
    has_broadcast: bool
    speculate: bool      # same-rank broadcasts read their operand directly
    guard: tuple         # conjunction of tests; empty = always true

    def passes(self, env: dict) -> bool:
        return all(eval_test(t, env) for t in self.guard)

    def to_json(self) -> dict:
        return {
            "id": self.id, "name": self.name,
            "flags": {"vectorized": self.vectorized, "has_implicit_broadcast": self.has_broadcast,
                      "speculate_broadcast": self.speculate},
            "guard": [_test_json(t) for t in self.guard],
        }

    @staticmethod
    def from_json(d: dict) -> "Version":
        f = d["flags"]
        return Version(d["id"], d["name"], f["vectorized"], f["has_implicit_broadcast"],
                       f["speculate_broadcast"], tuple(_test_from(t) for t in d["guard"]))


def select_version(versions, env: dict) -> int:
    """Index of the first version whose guard holds (the last one is the catch-all)."""
    for i, v in enumerate(versions):
        if v.passes(env):
            return i
    raise AssertionError("version table has no catch-all")  # pragma: no cover


def effective_guards(versions, env: dict) -> list:
    """Per version: own guard holds and no earlier guard holds."""
    out, earlier = [], False
    for v in versions:
        ok = v.passes(env)
        out.append(ok and not earlier)
        earlier = earlier or ok
    return out


def launch_config(total: int) -> tuple:
    tile = TILE_LARGE if total >= TILE_THRESHOLD else TILE_SMALL
    return tile, -(-total // tile)


# -- kernel spec -----------------------------------------------------------------

@dataclass(frozen=True)
class KOp:
    kind: str
    args: tuple          # ("in", p) | ("v", j) | ("f32", value)
    shape: tuple
    attrs: dict
    role: str            # loop | up | reduce | row | out | single
    in_shape: tuple = () # operand dims (broadcast / single-op kernels)
    speculable: bool = False

    __hash__ = None

    def to_json(self) -> dict:
        d = {"kind": self.kind, "args": [list(a) for a in self.args], "shape": _dims_json(self.shape),
             "attrs": self.attrs, "role": self.role}
        if self.in_shape:
            d["in_shape"] = [_dims_json(s) for s in self.in_shape]
        if self.speculable:
            d["speculable"] = True
        return d

    @staticmethod
    def from_json(d: dict) -> "KOp":
        return KOp(d["kind"], tuple(tuple(a) for a in d["args"]), _dims_from(d["shape"]), d["attrs"], d["role"],
                   tuple(_dims_from(s) for s in d.get("in_shape", [])), d.get("speculable", False))


@dataclass(frozen=True)
class KernelSpec:
    id: int
    name: str
    template: str               # loop | reduce | single
    group: FusionGroup
    input_shapes: tuple
    output_shapes: tuple
    body: tuple
    outputs: tuple              # local value index written to each output param
    domain: tuple
    versions: tuple
    num_scalars: int = 0
    scalar_sources: tuple = field(default=(), compare=False)  # (value id, element) per scalar slot

    __hash__ = None

    def to_json(self) -> dict:
        return {
            "id": self.id, "name": self.name, "template": self.template, "group": self.group.to_json(),
            "input_shapes": [_dims_json(s) for s in self.input_shapes],
            "output_shapes": [_dims_json(s) for s in self.output_shapes],
            "body": [k.to_json() for k in self.body], "outputs": list(self.outputs),
            "domain": _dims_json(self.domain), "versions": [v.to_json() for v in self.versions],
            "num_scalars": self.num_scalars,
            "launch_rule": {"threshold": TILE_THRESHOLD, "small": TILE_SMALL, "large": TILE_LARGE},
        }

    @staticmethod
    def from_json(d: dict) -> "KernelSpec":
        return KernelSpec(
            d["id"], d["name"], d["template"], FusionGroup.from_json(d["group"]),
            tuple(_dims_from(s) for s in d["input_shapes"]), tuple(_dims_from(s) for s in d["output_shapes"]),
            tuple(KOp.from_json(k) for k in d["body"]), tuple(d["outputs"]), _dims_from(d["domain"]),
            tuple(Version.from_json(v) for v in d["versions"]), d["num_scalars"],
        )


def _speculable(g: DhloGraph, op) -> bool:
    return (op.kind == "dynamic_broadcast_in_dim"
            and len(g.shape(op.inputs[0])) == len(op.shape)
            and op.attrs["broadcast_dims"] == list(range(len(op.shape))))


def _versions(g: DhloGraph, members: list, domain) -> tuple:
    bcasts = [op for op in members if op.kind == "dynamic_broadcast_in_dim"]
    spec = [op for op in bcasts if _speculable(g, op)]
    div4 = {"test": "divisible", "dims": tuple(domain), "by": VECTOR_WIDTH}
    if spec:
        eq = {"test": "dims_equal", "pairs": [(tuple(g.shape(op.inputs[0])), tuple(op.shape)) for op in spec]}
        rest = len(bcasts) > len(spec)
        return (
            Version(0, "vec4_nobcast", True, rest, True, (eq, div4)),
            Version(1, "nobcast", False, rest, True, (eq,)),
            Version(2, "scalar", False, True, False, ()),
        )
    has = bool(bcasts)
    return (
        Version(0, "vec4", True, has, False, (div4,)),
        Version(1, "scalar", False, has, False, ()),
    )


def _single_spec(kid: int, g: DhloGraph, group: FusionGroup, op) -> KernelSpec:
    x = op.inputs[0]
    attrs = {}
    sources = []
    args = []
    in_shapes = []
    if op.kind == "concat":
        args = [("in", group.inputs.index(v)) for v in op.inputs]
        in_shapes = [tuple(g.shape(v)) for v in op.inputs]
        attrs = {"axis": op.attrs["axis"]}
    else:
        args = [("in", 0)]
        in_shapes = [tuple(g.shape(x))]
        rank = len(g.shape(x))
        if op.kind == "transpose":
            attrs = {"perm": list(op.attrs["perm"])}
        elif op.kind == "dynamic_slice":
            names = ("start", "limit", "strides")
            for name, vid in zip(names, op.inputs[1:]):
                attrs[name] = list(range(len(sources), len(sources) + rank))
                sources.extend((vid, i) for i in range(rank))
        elif op.kind == "dynamic_pad":
            value = g.producer(op.inputs[1])
            args.append(("f32", float(value.attrs["value"][0])))
            for name, vid in zip(("low", "high", "interior"), op.inputs[2:]):
                attrs[name] = list(range(len(sources), len(sources) + rank))
                sources.extend((vid, i) for i in range(rank))
    kop = KOp(op.kind, tuple(args), tuple(op.shape), attrs, "single", tuple(in_shapes))
    input_shapes = tuple(tuple(g.shape(v)) for v in group.inputs)
    versions = _versions(g, [op], op.shape)
    return KernelSpec(kid, f"k{kid}_{op.kind}", "single", group, input_shapes, (tuple(op.shape),), (kop,), (0,),
                      tuple(op.shape), versions, len(sources), tuple(sources))


def specialize(g: DhloGraph, groups, cs=None) -> list:
    """One :class:`KernelSpec` per fusion group, in group order."""
    specs = []
    for group in groups:
        kid = len(specs)
        ops = [g.producer(v) for v in group.members]
        if group.root_kind == SINGLE:
            specs.append(_single_spec(kid, g, group, ops[0]))
            continue
        local = {op.id: j for j, op in enumerate(ops)}
        params = {v: p for p, v in enumerate(group.inputs)}
        roles = _roles(g, group, ops)
        body = []
        for op in ops:
            args = tuple(("v", local[a]) if a in local else ("in", params[a]) for a in op.data_inputs)
            attrs = dict(op.attrs)
            in_shape = ()
            if op.kind == "dynamic_broadcast_in_dim":
                in_shape = (tuple(g.shape(op.inputs[0])),)
            body.append(KOp(op.kind, args, tuple(op.shape), attrs, roles[op.id], in_shape, _speculable(g, op)))
        if group.root_kind == REDUCE_ROOT:
            domain = tuple(g.shape(g.producer(group.root).inputs[0]))
            template = "reduce"
        else:
            domain = tuple(ops[-1].shape)
            template = "loop"
        versions = _versions(g, ops, domain)
        name = f"k{kid}_" + "_".join(op.kind if op.kind != "reduce" else "reduce_" + op.attrs["mode"]
                                     for op in ops[:4]).replace("dynamic_broadcast_in_dim", "bcast")
        specs.append(KernelSpec(
            kid, name, template, group, tuple(tuple(g.shape(v)) for v in group.inputs),
            tuple(tuple(g.shape(v)) for v in group.outputs), tuple(body),
            tuple(local[v] for v in group.outputs), domain, versions,
        ))
    return specs


def _roles(g: DhloGraph, group: FusionGroup, ops: list) -> dict:
    if group.root_kind == LOOP:
        return {op.id: "loop" for op in ops}
    root = group.root
    upstream = set()
    frontier = [root]
    members = set(group.members)
    while frontier:
        v = frontier.pop()
        for a in g.producer(v).data_inputs:
            if a in members and a not in upstream:
                upstream.add(a)
                frontier.append(a)
    roles = {}
    down = [op for op in ops if op.id != root and op.id not in upstream]
    ew = [op for op in down if op.kind in ELEMENTWISE]
    row = any(op.kind == "dynamic_broadcast_in_dim" and op.inputs[0] == root for op in down)
    for op in ops:
        if op.id == root:
            roles[op.id] = "reduce"
        elif op.id in upstream:
            roles[op.id] = "up"
        else:
            roles[op.id] = "row" if row or not ew else "out"
    return roles
