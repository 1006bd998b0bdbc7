"""Whole-graph signatures and the thread-safe plan cache."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path

from .frontend.graph import FrameworkGraph


def _rename_symbols(doc: dict) -> dict:
    names: dict = {}

    def canon(d):
        if isinstance(d, str):
            names.setdefault(d, f"?{len(names)}")
            return names[d]
        return d

    doc = json.loads(json.dumps(doc))
    for t in doc["inputs"]:
        t["shape"] = [canon(d) for d in t["shape"]]
    for n in doc["nodes"]:
        if "shape" in n["attrs"]:
            n["attrs"]["shape"] = [canon(d) for d in n["attrs"]["shape"]]
    doc.pop("name", None)
    return doc


def graph_signature(g: FrameworkGraph, options=None) -> str:
    """Digest of the graph up to its name and the spelling of its dimension symbols.

    Constant extents are part of the key because plans specialize on them.
    """
    doc = {"graph": _rename_symbols(g.to_json()), "options": options or {}}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


class PlanCache:
    """Signature -> plan map; at most one compilation per signature runs at a time.

    With ``directory`` set, plans are also persisted as ``<digest>.json``.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self._lock = threading.Lock()
        self._plans: dict = {}
        self._inflight: dict = {}
        self.directory = Path(directory) if directory else None
        self.compile_count = 0
        self.cache_hits = 0
        self.misses = 0

    def _from_disk(self, key: str):
        if self.directory is None:
            return None
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        from .runtime.plan import CompiledPlan

        return CompiledPlan.loads(path.read_text(encoding="utf-8"))

    def _to_disk(self, key: str, plan) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self.directory / f".{key}.{os.getpid()}.{threading.get_ident()}.tmp"
        tmp.write_text(plan.dumps(), encoding="utf-8")
        os.replace(tmp, self.directory / f"{key}.json")

    def get_or_compile(self, key: str, build):
        while True:
            with self._lock:
                if key in self._plans:
                    self.cache_hits += 1
                    return self._plans[key]
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    break
            event.wait()
        try:
            plan = self._from_disk(key)
            hit = plan is not None
            if plan is None:
                plan = build()
                self._to_disk(key, plan)
            with self._lock:
                self._plans[key] = plan
                if hit:
                    self.cache_hits += 1
                else:
                    self.compile_count += 1
                    self.misses += 1
            return plan
        finally:
            with self._lock:
                del self._inflight[key]
            event.set()

    def clear(self) -> None:
        with self._lock:
            self._plans.clear()
            self.compile_count = self.cache_hits = self.misses = 0

    def __len__(self) -> int:
        return len(self._plans)
