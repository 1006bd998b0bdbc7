import os
from pathlib import Path

import numpy as np
import pytest

from disc import fixtures
from disc.dhlo import serialize
from disc.dhlo.ir import DhloGraph, DhloOp, GraphBuilder, Sym, SymbolOrigin, Value
from disc.dhlo.passes import (
    CANONICALIZE, DCE, SIMPLIFY_BROADCAST, Pass, bind_symbols, dead_code_elimination, run_pipeline,
    simplify_broadcast,
)
from disc.dhlo.verify import verify
from disc.errors import PassError
from disc.frontend import lower_to_dhlo
from disc.interpreter import eval_dhlo
from disc.pipeline import compile_uncached
from disc.shape_analysis.propagation import infer

from helpers import rel_err

GOLDEN = Path(__file__).parent / "golden"


def golden(name: str, text: str) -> None:
    path = GOLDEN / name
    if os.environ.get("DISC_UPDATE_GOLDEN"):
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


def _sym_input(b: GraphBuilder, vid: str, dims):
    shape = []
    for axis, d in enumerate(dims):
        if isinstance(d, str):
            shape.append(b.new_sym(SymbolOrigin("input", vid, axis, d)))
        else:
            shape.append(d)
    b.add_input(vid, shape)
    return tuple(shape)


def test_valid_one_op_graph():
    b = GraphBuilder("one")
    s = _sym_input(b, "x", ["S0", 4])
    out = b.emit("exp", ["x"], s)
    assert verify(b.build([out])) == []


def test_rank2_index_operand_rejected():
    b = GraphBuilder("bad")
    s = _sym_input(b, "x", [8])
    idx = b.emit("constant", [], [1, 1], "i64", {"value": [0]})
    lim = b.const_i64([4])
    st = b.const_i64([1])
    out = b.emit("dynamic_slice", ["x", idx, lim, st], [4])
    msgs = [d.message for d in verify(b.build([out]))]
    assert any("index operand must be rank-1" in m for m in msgs)


def test_dominance_violation():
    x = (Sym(0), 4)
    g = DhloGraph("g", (Value("x", x),), ("1",),
                  (DhloOp("1", "exp", ("2",), x), DhloOp("2", "neg", ("x",), x)),
                  {0: SymbolOrigin("input", "x", 0)})
    assert any("dominance violation" in d.message for d in verify(g))


def test_undefined_value_and_unknown_kind():
    x = (3,)
    g = DhloGraph("g", (Value("x", x),), ("1",),
                  (DhloOp("1", "frob", ("x",), x), DhloOp("2", "neg", ("nope",), x)), {})
    msgs = " ".join(d.message for d in verify(g))
    assert "unknown op kind" in msgs and "undefined value" in msgs


def _softmax_dhlo():
    fx = fixtures.load("softmax")
    return lower_to_dhlo(fx.graph)


def test_empty_pass_list_is_identity():
    g, seed = _softmax_dhlo()
    cs = infer(g, seed)
    g2, cs2 = run_pipeline(g, cs, [])
    assert serialize.dumps(g2) == serialize.dumps(g)
    assert cs2 is cs


def test_json_roundtrip_is_stable():
    g, _ = _softmax_dhlo()
    text = serialize.dumps(g)
    assert serialize.dumps(serialize.loads(text)) == text
    with pytest.raises(ValueError):
        serialize.graph_from_json({"format": "other"})


def test_text_dump_golden():
    g, _ = _softmax_dhlo()
    text = serialize.to_text(g)
    for line in text.splitlines()[1:]:
        if line.strip().startswith("%"):
            assert " = " in line and " : " in line
    golden("softmax.dhlo.txt", text)


def _add_broadcast_graph(redundant_twice=False):
    b = GraphBuilder("bc")
    s = _sym_input(b, "x", ["S0", 4])
    b.add_input("y", s)
    dims = [b.dim("x", 0), 4]
    y = b.emit("dynamic_broadcast_in_dim", ["y", b.vector(dims)], s, attrs={"broadcast_dims": [0, 1]})
    if redundant_twice:
        y = b.emit("dynamic_broadcast_in_dim", [y, b.vector(dims)], s, attrs={"broadcast_dims": [0, 1]})
    out = b.emit("add", ["x", y], s)
    return b.build([out])


@pytest.mark.parametrize("twice", [False, True])
def test_simplify_broadcast_removes_provable(twice):
    g = _add_broadcast_graph(twice)
    cs = infer(g)
    g2, _ = run_pipeline(g, cs, [SIMPLIFY_BROADCAST])
    assert "dynamic_broadcast_in_dim" not in [op.kind for op in g2.ops]
    rng = np.random.default_rng(1)
    for n in (0, 1, 5):
        inputs = {"x": rng.standard_normal((n, 4)).astype(np.float32),
                  "y": rng.standard_normal((n, 4)).astype(np.float32)}
        assert rel_err(eval_dhlo(g2, inputs)[0][0], eval_dhlo(g, inputs)[0][0]) == 0.0


def test_simplify_broadcast_keeps_unprovable():
    b = GraphBuilder("bc")
    s = _sym_input(b, "x", ["S0", 4])
    b.add_input("y", (1, 4))
    y = b.emit("dynamic_broadcast_in_dim", ["y", b.vector([b.dim("x", 0), 4])], s,
               attrs={"broadcast_dims": [0, 1]})
    g = b.build([b.emit("add", ["x", y], s)])
    assert simplify_broadcast(g, infer(g)) is g


def test_dce_and_bind_symbols():
    b = GraphBuilder("d")
    s = _sym_input(b, "x", ["S0"])
    keep = b.emit("exp", ["x"], s)
    b.emit("neg", ["x"], s)
    g = b.build([keep])
    assert len(dead_code_elimination(g).ops) == 1
    bound = bind_symbols(g, {s[0].id: 7})
    assert bound.inputs[0].shape == (7,)
    assert verify(bound) == []


def test_failing_pass_names_itself():
    g, seed = _softmax_dhlo()
    broken = Pass("break", lambda g, cs: (g.replace(outputs=("missing",)), cs))
    with pytest.raises(PassError) as e:
        run_pipeline(g, infer(g, seed), [broken])
    assert e.value.pass_name == "break"


def test_transformer_verifies_at_every_stage():
    fx = fixtures.load("transformer_block")
    seen = []
    art = compile_uncached(fx.graph, on_stage=lambda name, text: seen.append(name))
    assert seen == ["lowered", "constraints", "simplified", "fused", "kernels", "shape_program", "buffers",
                    "plan"]
    g, seed = lower_to_dhlo(fx.graph)
    assert verify(g) == []
    stages = []
    run_pipeline(g, infer(g, seed), [SIMPLIFY_BROADCAST, CANONICALIZE, DCE],
                 on_stage=lambda name, g, cs: stages.append((name, verify(g))))
    assert [s for s, _ in stages] == ["simplify_broadcast", "canonicalize", "dce"]
    assert all(d == [] for _, d in stages)
    assert verify(art.dhlo) == []
