import numpy as np
import pytest

from disc import fixtures
from disc.fusion.planner import LOOP, REDUCE_ROOT, SINGLE, is_convex
from disc.fusion.specialize import (
    TILE_LARGE, TILE_SMALL, KernelSpec, effective_guards, launch_config, select_version,
)
from disc.pipeline import CompileOptions, compile_uncached
from disc.randgraph import random_graph

from helpers import graph, node


def _art(g, **opts):
    return compile_uncached(g, CompileOptions(**opts))


def test_elementwise_chain_is_one_loop_group():
    g = graph([("x", ["S0", 4]), ("y", ["S0", 4])],
              [node("a", "Add", ["x", "y"]), node("m", "Mul", ["a", "x"]), node("e", "Exp", ["m"])], ["e"])
    art = _art(g)
    assert len(art.groups) == 1
    (grp,) = art.groups
    assert grp.root_kind == LOOP and len(grp.members) == 3


def test_softmax_groups_follow_reduce_root_rule():
    art = _art(fixtures.load("softmax").graph)
    assert [grp.root_kind for grp in art.groups] == [REDUCE_ROOT, REDUCE_ROOT]
    first, second = art.groups
    kinds = [art.dhlo.producer(m).kind for m in second.members]
    assert kinds == ["dynamic_broadcast_in_dim", "sub", "exp", "reduce", "dynamic_broadcast_in_dim", "div"]
    assert art.dhlo.producer(second.root).kind == "reduce"
    assert first.outputs[0] in second.inputs


def test_split_groups_need_injected_constraints():
    g = fixtures.load("split").graph
    with_c, without = _art(g), _art(g, inject_constraints=False)
    fused = [grp for grp in with_c.groups if grp.root_kind == LOOP]
    assert len(fused) == 1 and len(fused[0].members) == 2
    kinds = [[without.dhlo.producer(m).kind for m in grp.members] for grp in without.groups]
    add = next(i for i, k in enumerate(kinds) if "add" in k)
    assert "mul" not in kinds[add]
    assert "dynamic_broadcast_in_dim" in kinds[add]
    assert len(without.groups) > len(with_c.groups)


def test_matmul_never_fused():
    art = _art(fixtures.load("matmul_epilogue").graph)
    members = {m for grp in art.groups for m in grp.members}
    matmuls = [op.id for op in art.dhlo.data_ops() if op.kind == "matmul"]
    assert matmuls and not members & set(matmuls)
    assert len(art.groups) == 1 and art.groups[0].root_kind == LOOP


def test_no_fusion_gives_singletons():
    art = _art(fixtures.load("softmax").graph, fusion=False)
    assert all(len(grp.members) == 1 for grp in art.groups)
    assert len(art.groups) == 7


@pytest.mark.parametrize("seed", range(60))
def test_random_groups_are_convex_partitions(seed):
    art = _art(random_graph(seed))
    g = art.dhlo
    seen = []
    for grp in art.groups:
        assert is_convex(g, grp.members)
        seen += grp.members
        kinds = [g.producer(m).kind for m in grp.members]
        assert kinds.count("reduce") <= 1
        if grp.root_kind == SINGLE:
            assert len(grp.members) == 1
    data = [op.id for op in g.data_ops() if op.kind != "matmul"]
    assert sorted(seen) == sorted(data)


# -- signatures ------------------------------------------------------------------

def _chain(op, sym, axes=None):
    nodes = [node("a", op, ["x", "x"]), node("b", op, ["a", "x"])]
    if axes is not None:
        nodes.append(node("r", "ReduceSum", ["b"], axes=axes))
    return graph([("x", [sym, 4])], nodes, [nodes[-1]["id"]])


def test_group_signature_ignores_symbol_names():
    a, b = _art(_chain("Add", "S0")), _art(_chain("Add", "S1"))
    assert [grp.signature for grp in a.groups] == [grp.signature for grp in b.groups]


def test_group_signature_sees_op_kinds_and_axes():
    add, mul = _art(_chain("Add", "S0")), _art(_chain("Mul", "S0"))
    assert add.groups[0].signature != mul.groups[0].signature
    r0, r1 = _art(_chain("Add", "S0", [0])), _art(_chain("Add", "S0", [1]))
    assert r0.groups[0].signature != r1.groups[0].signature


# -- versions and guards -----------------------------------------------------------

def _single_spec(g) -> KernelSpec:
    (spec,) = _art(g).specs
    return spec


def _env(spec, values):
    syms = sorted({d.id for d in spec.domain if not isinstance(d, int)})
    return dict(zip(syms, values))


def test_vectorized_version_selection_table():
    spec = _single_spec(graph([("x", ["S0", "S1"])], [node("e", "Exp", ["x"]), node("t", "Tanh", ["e"])], ["t"]))
    assert [v.name for v in spec.versions] == ["vec4", "scalar"]
    for s0 in range(1, 17):
        for s1 in range(1, 5):
            chosen = spec.versions[select_version(spec.versions, _env(spec, [s0, s1]))]
            assert chosen.vectorized == ((s0 * s1) % 4 == 0), (s0, s1)


@pytest.mark.parametrize("s0, vectorized", [(16, True), (3, True), (1, True)])
def test_vectorized_examples(s0, vectorized):
    spec = _single_spec(graph([("x", ["S0", 4])], [node("e", "Exp", ["x"])], ["e"]))
    assert spec.versions[select_version(spec.versions, _env(spec, [s0]))].vectorized is vectorized


def test_broadcast_speculation():
    spec = _single_spec(graph([("x", ["S0", 4]), ("y", [1, 4])], [node("a", "Add", ["x", "y"])], ["a"]))
    names = [v.name for v in spec.versions]
    assert names == ["vec4_nobcast", "nobcast", "scalar"]
    assert not spec.versions[select_version(spec.versions, _env(spec, [1]))].has_broadcast
    assert spec.versions[select_version(spec.versions, _env(spec, [3]))].name == "scalar"


def test_exactly_one_effective_guard():
    for fx in fixtures.load_all():
        art = _art(fx.graph)
        rng = np.random.default_rng(0)
        for spec in art.specs:
            assert spec.versions[-1].guard == ()
            syms = sorted({d.id for s in spec.input_shapes for d in s if not isinstance(d, int)}
                          | {d.id for d in spec.domain if not isinstance(d, int)})
            for _ in range(20):
                env = {s: int(rng.integers(0, 9)) for s in syms}
                assert sum(effective_guards(spec.versions, env)) == 1


def test_launch_config_rule():
    assert launch_config(0) == (TILE_SMALL, 0)
    assert launch_config(1) == (TILE_SMALL, 1)
    assert launch_config(65535) == (TILE_SMALL, 256)
    assert launch_config(65536) == (TILE_LARGE, 64)
    assert launch_config(65537) == (TILE_LARGE, 65)


def test_kernel_spec_json_roundtrip():
    for fx in fixtures.load_all():
        for spec in _art(fx.graph).specs:
            again = KernelSpec.from_json(spec.to_json())
            assert again.to_json() == spec.to_json()
