"""Concrete semantics of every data op on numpy arrays.

The eager interpreter, the fused-kernel evaluator and the library calls all
compute through these functions, so a mismatch between a plan and the
oracle points at planning, never at arithmetic.
"""

from __future__ import annotations

import numpy as np

from .errors import ExecutionError, ShapeMismatchError

F32 = np.float32

_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "maximum": np.maximum,
}
_UNARY = {"exp": np.exp, "tanh": np.tanh, "neg": np.negative}


def elementwise(kind: str, *args: np.ndarray) -> np.ndarray:
    """f32 elementwise op; operands are broadcast numpy-style."""
    with np.errstate(all="ignore"):
        if kind in _BINARY:
            return _BINARY[kind](args[0], args[1], dtype=F32)
        return _UNARY[kind](args[0], dtype=F32)


def reduce_rows(rows: np.ndarray, mode: str) -> np.ndarray:
    """Reduce each row of a C-contiguous 2-D array; sums accumulate in float64."""
    if mode == "sum":
        return np.add.reduce(rows.astype(np.float64), axis=1).astype(F32)
    return np.max(rows, axis=1, initial=-np.inf).astype(F32)


def reduce(x: np.ndarray, axes, mode: str) -> np.ndarray:
    axes = list(axes)
    kept = [i for i in range(x.ndim) if i not in axes]
    out_shape = tuple(x.shape[i] for i in kept)
    k = 1
    for a in axes:
        k *= x.shape[a]
    n = int(np.prod(out_shape, dtype=np.int64))
    rows = np.ascontiguousarray(np.transpose(x, kept + axes)).reshape(n, k)
    return reduce_rows(rows, mode).reshape(out_shape)


def transpose(x: np.ndarray, perm) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(x, perm))


def broadcast_in_dim(x: np.ndarray, shape, bd) -> np.ndarray:
    shape = tuple(int(d) for d in shape)
    if len(bd) != x.ndim:
        raise ShapeMismatchError(f"broadcast_dims {list(bd)} do not match operand rank {x.ndim}")
    expanded = [1] * len(shape)
    for i, axis in enumerate(bd):
        d = x.shape[i]
        if d not in (1, shape[axis]):
            raise ShapeMismatchError(f"cannot broadcast extent {d} to {shape[axis]} on axis {axis}")
        expanded[axis] = d
    return np.array(np.broadcast_to(x.reshape(expanded), shape), order="C")


def reshape(x: np.ndarray, shape) -> np.ndarray:
    shape = tuple(int(d) for d in shape)
    if any(d < 0 for d in shape) or int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeMismatchError(f"cannot reshape {list(x.shape)} to {list(shape)}")
    return x.reshape(shape)


def slice_extent(start: int, limit: int, stride: int) -> int:
    return max(0, -(-(limit - start) // stride))


def dynamic_slice(x: np.ndarray, start, limit, strides) -> np.ndarray:
    index = []
    for axis, (s, l, st) in enumerate(zip(start, limit, strides)):
        s, l, st = int(s), int(l), int(st)
        if st <= 0:
            raise ExecutionError(f"slice stride {st} on axis {axis} must be positive")
        if s < 0 or l > x.shape[axis]:
            raise ExecutionError(f"slice [{s}, {l}) out of range for extent {x.shape[axis]} on axis {axis}")
        index.append(slice(s, max(s, l), st))
    return np.ascontiguousarray(x[tuple(index)])


def pad_extent(n: int, low: int, high: int, interior: int) -> int:
    return low + high + n + max(n - 1, 0) * interior


def dynamic_pad(x: np.ndarray, value, low, high, interior) -> np.ndarray:
    amounts = [(int(a), int(b), int(c)) for a, b, c in zip(low, high, interior)]
    if any(v < 0 for t in amounts for v in t):
        raise ExecutionError(f"negative pad amounts {amounts}")
    shape = tuple(pad_extent(n, *t) for n, t in zip(x.shape, amounts))
    out = np.full(shape, F32(value), dtype=F32)
    if x.size:
        index = tuple(slice(lo, lo + (n - 1) * (i + 1) + 1, i + 1) for n, (lo, _, i) in zip(x.shape, amounts))
        out[index] = x
    return out


def concat(xs, axis: int) -> np.ndarray:
    first = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(first) or any(a != b for i, (a, b) in enumerate(zip(first, x.shape)) if i != axis):
            raise ShapeMismatchError(f"concat operands {list(first)} and {list(x.shape)} differ off axis {axis}")
    return np.concatenate(xs, axis=axis).astype(F32, copy=False)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul contraction extents {a.shape[1]} and {b.shape[0]} differ")
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(F32)


def eval_dynamic_op(kind: str, operands: list, attrs: dict) -> np.ndarray:
    """Shared semantics of the shape-parameterized data ops (index operands as int arrays)."""
    if kind == "dynamic_slice":
        return dynamic_slice(operands[0], *(list(map(int, o)) for o in operands[1:]))
    if kind == "dynamic_pad":
        return dynamic_pad(operands[0], operands[1].reshape(()), *(list(map(int, o)) for o in operands[2:]))
    if kind == "dynamic_broadcast_in_dim":
        return broadcast_in_dim(operands[0], list(map(int, operands[1])), attrs["broadcast_dims"])
    if kind == "dynamic_reshape":
        return reshape(operands[0], list(map(int, operands[1])))
    raise ValueError(f"{kind} is not a dynamic op")
