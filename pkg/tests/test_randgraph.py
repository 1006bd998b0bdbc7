import numpy as np
import pytest

from disc.frontend.graph import validate
from disc.interpreter import eval_framework
from disc.randgraph import graph_symbols, make_inputs, random_binding, random_graph


@pytest.mark.parametrize("seed", range(30))
def test_random_graphs_are_valid_and_bounded(seed):
    g = random_graph(seed, max_nodes=10, max_rank=3)
    validate(g)
    assert 1 <= len(g.nodes) <= 10
    assert all(len(t.shape) <= 3 for t in g.inputs)
    rng = np.random.default_rng(seed)
    b = random_binding(g, rng)
    assert set(b) == set(graph_symbols(g))
    eval_framework(g, make_inputs(g, b, rng))


def test_generator_is_deterministic():
    assert random_graph(7).to_json() == random_graph(7).to_json()
    assert any(random_graph(s).to_json() != random_graph(0).to_json() for s in range(1, 5))
