"""Shipped fixture graphs with their shape bindings and expected stats."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..frontend.graph import FrameworkGraph, graph_from_json

DIRECTORY = Path(__file__).parent


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    graph: FrameworkGraph
    bindings: tuple   # dicts: symbol name -> extent
    expected: dict

    __hash__ = None

    @property
    def symbols(self) -> list:
        seen = []
        for t in self.graph.inputs:
            for d in t.shape:
                if isinstance(d, str) and d not in seen:
                    seen.append(d)
        return seen

    @property
    def is_static(self) -> bool:
        return not self.symbols

    def input_shapes(self, binding: dict) -> dict:
        return {t.id: tuple(binding[d] if isinstance(d, str) else d for d in t.shape) for t in self.graph.inputs}

    def make_inputs(self, binding: dict, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        return {vid: rng.uniform(-1.0, 1.0, size=shape).astype(np.float32)
                for vid, shape in self.input_shapes(binding).items()}

    def random_binding(self, rng, low: int = 0, high: int = 12) -> dict:
        """A binding respecting the divisibility a Split in the graph requires."""
        out = {}
        mult = self._multiples()
        for s in self.symbols:
            m = mult.get(s, 1)
            out[s] = int(rng.integers(low // m, high // m + 1)) * m
        return out

    def _multiples(self) -> dict:
        specs = {t.id: t.shape for t in self.graph.inputs}
        out = {}
        for n in self.graph.nodes:
            if n.op == "Split" and n.inputs[0] in specs:
                d = specs[n.inputs[0]][n.attrs["axis"]]
                if isinstance(d, str):
                    out[d] = n.attrs["num_splits"]
        return out


def names() -> list:
    return sorted(p.stem for p in DIRECTORY.glob("*.json"))


def load(name: str) -> Fixture:
    path = DIRECTORY / f"{name}.json"
    if not path.exists():
        raise KeyError(f"no fixture named {name!r}; available: {', '.join(names())}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    return Fixture(doc["name"], doc.get("description", ""), graph_from_json(doc["graph"]),
                   tuple(doc.get("bindings", [{}])), doc.get("expected", {}))


def load_all() -> list:
    return [load(n) for n in names()]


def graph_path(name: str) -> Path:
    return DIRECTORY / f"{name}.json"
