"""Built-in library kernels for compute-intensive ops, chosen per runtime shape."""

from __future__ import annotations

import numpy as np

from .. import semantics as sem
from ..errors import ShapeMismatchError

SMALL_LIMIT = 64
BLOCK = 64


def matmul_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sem.matmul(a, b)


def matmul_tiled(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    acc = np.zeros((m, n), dtype=np.float64)
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    for k0 in range(0, k, BLOCK):
        acc += a64[:, k0:k0 + BLOCK] @ b64[k0:k0 + BLOCK, :]
    return acc.astype(np.float32)


REGISTRY = {"matmul.naive": matmul_naive, "matmul.tiled": matmul_tiled}


def impl_key(m: int, k: int, n: int) -> str:
    return "matmul.naive" if max(m, k, n) <= SMALL_LIMIT else "matmul.tiled"


def call_matmul(a: np.ndarray, b: np.ndarray) -> tuple:
    """Run the registered implementation for these extents; returns (result, key)."""
    key = impl_key(a.shape[0], a.shape[1], b.shape[1])
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul contraction extents {a.shape[1]} and {b.shape[0]} differ")
    return REGISTRY[key](a, b), key
