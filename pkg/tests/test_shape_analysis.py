import itertools

import pytest
from hypothesis import given, settings, strategies as st

from disc.dhlo.ir import GraphBuilder, Sym, SymbolOrigin
from disc.errors import ContradictionError, ShapeMismatchError, UnbindableSymbolError
from disc.frontend import lower_to_dhlo
from disc.shape_analysis.constraints import ConstraintSet
from disc.shape_analysis.program import BindDim, emit_shape_program, evaluate
from disc.shape_analysis.propagation import infer, propagation_class

from helpers import graph, node

S0, S1, S2, S3 = (Sym(i) for i in range(4))


def _builder(inputs):
    b = GraphBuilder("t")
    syms = {}
    for vid, dims in inputs:
        shape = []
        for axis, d in enumerate(dims):
            if isinstance(d, str):
                if d not in syms:
                    syms[d] = b.new_sym(SymbolOrigin("input", vid, axis, d))
                shape.append(syms[d])
            else:
                shape.append(d)
        b.add_input(vid, shape)
    return b, syms


# -- union-find against a naive closure ------------------------------------------

def _naive_components(n_syms, eqs):
    comp = {("s", i): {("s", i)} for i in range(n_syms)}
    for a, b in eqs:
        for x in (a, b):
            comp.setdefault(x, {x})
        merged = comp[a] | comp[b]
        for x in merged:
            comp[x] = merged
    return comp


def _term(t):
    return Sym(t[1]) if t[0] == "s" else t[1]


terms = st.one_of(st.tuples(st.just("s"), st.integers(0, 7)), st.tuples(st.just("c"), st.integers(1, 3)))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(terms, terms), max_size=12))
def test_union_find_matches_naive_closure(eqs):
    comp = _naive_components(8, eqs)
    contradictory = any(len({x for x in c if x[0] == "c"}) > 1 for c in comp.values())
    cs = ConstraintSet()
    if contradictory:
        with pytest.raises(ContradictionError):
            for a, b in eqs:
                cs.union(_term(a), _term(b))
        return
    for a, b in eqs:
        cs.union(_term(a), _term(b))
    for x, y in itertools.combinations(sorted(comp), 2):
        assert cs.same(_term(x), _term(y)) == (y in comp[x])
    for x in comp:
        consts = [c[1] for c in comp[x] if c[0] == "c"]
        assert cs.const_value(_term(x)) == (consts[0] if consts else None)


def test_same_dims_examples():
    cs = ConstraintSet()
    cs.union(S0, S1)
    assert cs.same_dims((S0, 4), (S1, 4))
    assert not cs.same_dims((S0, 4), (4, S0))
    assert cs.same_dims((8,), (8,))
    assert not cs.same_dims((S0,), (S0, 1))


def test_same_size_examples():
    cs = ConstraintSet()
    assert cs.same_size((S0, 4), (4, S0))
    assert not cs.same_size((S0,), (S1,))
    cs.link_sizes((S0, 4), (S1,))
    assert cs.same_size((S0, 4), (S1,))
    assert cs.same_size((4, S0), (S1, 1))
    assert cs.same_size((S2, 0), (0,))


def test_size_links_see_later_unions():
    cs = ConstraintSet()
    cs.link_sizes((S0, 4), (S1,))
    assert not cs.same_size((S2, 4), (S1,))
    cs.union(S2, S0)
    assert cs.same_size((S2, 4), (S1,))


def test_frozen_set_rejects_new_facts_but_answers_queries():
    cs = ConstraintSet()
    cs.union(S0, S1)
    cs.freeze()
    assert cs.same(S0, S1)
    with pytest.raises(RuntimeError):
        cs.union(S0, S2)
    cs2 = cs.copy()
    cs2.union(S0, S2)
    assert cs2.same(S1, S2) and not cs.same(S1, S2)


# -- propagation rules ------------------------------------------------------------

def test_elementwise_unifies_operands():
    b, s = _builder([("x", ["S0", 4]), ("y", ["S1", 4])])
    out = b.emit("add", ["x", "y"], [b.new_sym(SymbolOrigin("op", "o", 0)), 4])
    cs = infer(b.build([out]))
    assert cs.same(s["S0"], s["S1"])
    assert propagation_class("add") == "ElementwiseSameShape"


def test_transpose_permutes_and_keeps_size():
    b, s = _builder([("x", ["S0", "S1"])])
    o0, o1 = b.new_sym(SymbolOrigin("op", "t", 0)), b.new_sym(SymbolOrigin("op", "t", 1))
    out = b.emit("transpose", ["x"], [o0, o1], attrs={"perm": [1, 0]})
    g = b.build([out])
    cs = infer(g)
    assert cs.same(o0, s["S1"]) and cs.same(o1, s["S0"])
    assert cs.same_size(g.inputs[0].shape, g.shape(out))


def test_matmul_contraction():
    b, s = _builder([("a", ["S0", "S1"]), ("b", ["S2", "S3"])])
    o0, o1 = b.new_sym(SymbolOrigin("op", "m", 0)), b.new_sym(SymbolOrigin("op", "m", 1))
    out = b.emit("matmul", ["a", "b"], [o0, o1])
    cs = infer(b.build([out]))
    assert cs.same(s["S1"], s["S2"])
    assert cs.same(o0, s["S0"]) and cs.same(o1, s["S3"])


def test_propagation_reaches_fixpoint_through_chains():
    b, s = _builder([("x", ["A", "B"]), ("y", ["C", "D"]), ("z", ["E", "F"])])
    t = b.emit("transpose", ["y"], [s["D"], s["C"]], attrs={"perm": [1, 0]})
    v = b.emit("add", ["z", "x"], [s["E"], s["F"]])
    u = b.emit("add", [v, t], [s["E"], s["F"]])
    cs = infer(b.build([u]))
    assert cs.same(s["D"], s["A"]) and cs.same(s["C"], s["B"]) and cs.same(s["E"], s["D"])
    assert len(cs.classes()) == 2


def test_framework_broadcast_of_distinct_symbols_proves_nothing():
    g = graph([("x", ["A"]), ("y", ["B"])], [node("u", "Add", ["x", "y"])], ["u"])
    d, seed = lower_to_dhlo(g)
    cs = infer(d, seed)
    x, y = (v.shape for v in d.inputs)
    assert not cs.same(x[0], y[0])


def test_contradiction_is_reported():
    b, _ = _builder([("x", [3]), ("y", [4])])
    out = b.emit("add", ["x", "y"], [3])
    with pytest.raises(ContradictionError):
        infer(b.build([out]))


def test_infer_leaves_seed_untouched():
    seed = ConstraintSet()
    b, s = _builder([("x", ["S0"]), ("y", ["S1"])])
    out = b.emit("add", ["x", "y"], [s["S0"]])
    cs = infer(b.build([out]), seed)
    assert cs.same(s["S0"], s["S1"]) and not seed.same(s["S0"], s["S1"])


# -- shape program -----------------------------------------------------------------

def _split_program():
    g = graph([("x", ["S0", 8])],
              [{"id": "s", "op": "Split", "inputs": ["x"], "attrs": {"axis": 1, "num_splits": 2},
                "outputs": ["a", "b"]}, node("c", "Exp", ["a"]), node("d", "Exp", ["b"])], ["c", "d"])
    d, seed = lower_to_dhlo(g)
    cs = infer(d, seed)
    return d, cs, emit_shape_program(d, cs)


def test_split_outputs_share_one_bind():
    d, cs, sp = _split_program()
    a, b = (d.shape(o) for o in d.outputs)
    binds = [i for i in sp.instructions if isinstance(i, BindDim)]
    assert len({i.sym for i in binds}) == len(binds)
    rep = cs.find(a[1])
    assert cs.find(b[1]) == rep
    assert sum(1 for i in binds if i.sym == rep.id) == 1
    _, env = evaluate(sp, [(3, 8)])
    assert env[rep.id] == 4


def test_shape_program_examples():
    from helpers import bound_value, pad_param_graph, slice_param_graph

    g, out = slice_param_graph()
    cs = infer(g)
    _, env = evaluate(emit_shape_program(g, cs), [(10,), (2,), (9,), (3,)])
    assert bound_value(cs, env, out) == 3
    g, out = pad_param_graph()
    cs = infer(g)
    _, env = evaluate(emit_shape_program(g, cs), [(4,), (1,), (2,), (1,)])
    assert bound_value(cs, env, out) == 10


def test_each_symbol_bound_once_and_levels_monotone():
    from disc import fixtures

    for fx in fixtures.load_all():
        d, seed = lower_to_dhlo(fx.graph)
        cs = infer(d, seed)
        sp = emit_shape_program(d, cs)
        binds = [i.sym for i in sp.instructions if isinstance(i, BindDim)]
        assert len(binds) == len(set(binds)), fx.name
        assert set(binds) == set(sp.bound), fx.name
        assert len(sp.levels) == len(sp.instructions)
        assert [lvl for lvl, _, _ in sp.segments()] == sorted({lvl for lvl, _, _ in sp.segments()})


def test_data_dependent_extent_is_unbindable():
    b = GraphBuilder("u")
    b.add_input("x", [1])
    data = b.emit("neg", ["x"], [1])
    out = b.reserve_id()
    free = b.new_sym(SymbolOrigin("op", out, 0))
    b.emit("dynamic_reshape", ["x", data], [free], vid=out)
    g = b.build([out])
    with pytest.raises(UnbindableSymbolError, match="data-dependent"):
        emit_shape_program(g, infer(g))


def test_verify_mode_catches_inconsistent_inputs():
    g = graph([("a", ["S0", 4]), ("b", ["S0", 4])], [node("c", "Add", ["a", "b"])], ["c"])
    d, seed = lower_to_dhlo(g)
    cs = infer(d, seed)
    sp = emit_shape_program(d, cs)
    evaluate(sp, [(3, 4), (3, 4)], verify=True)
    with pytest.raises(ShapeMismatchError):
        evaluate(sp, [(3, 4), (5, 4)], verify=True)
