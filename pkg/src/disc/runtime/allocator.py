"""Per-executor cached allocator: exact-size free lists, no eviction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Block:
    id: int
    nbytes: int
    data: np.ndarray = field(repr=False)


class CachedAllocator:
    def __init__(self):
        self._free: dict = {}
        self._next = 0
        self.alloc_calls = 0
        self.cache_hits = 0
        self.in_use = 0
        self.peak_bytes = 0

    def alloc(self, nbytes: int) -> Block:
        self.alloc_calls += 1
        bucket = self._free.get(nbytes)
        if bucket:
            self.cache_hits += 1
            block = bucket.pop()
        else:
            block = Block(self._next, nbytes, np.empty(nbytes // 4, dtype=np.float32))
            self._next += 1
        self.in_use += nbytes
        self.peak_bytes = max(self.peak_bytes, self.in_use)
        return block

    def free(self, block: Block) -> None:
        self.in_use -= block.nbytes
        self._free.setdefault(block.nbytes, []).append(block)

    def release(self, block: Block) -> None:
        """Hand a block to the caller for good (graph outputs)."""
        self.in_use -= block.nbytes

    def reset_peak(self) -> None:
        self.peak_bytes = self.in_use

    @property
    def cached_bytes(self) -> int:
        return sum(b.nbytes for bucket in self._free.values() for b in bucket)
