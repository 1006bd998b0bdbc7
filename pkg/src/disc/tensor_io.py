"""Tensor files: a ``shape: d0,d1,...`` header line followed by little-endian f32 data."""

from __future__ import annotations

import numpy as np

from .errors import ExecutionError

_LE_F32 = np.dtype("<f4")


def dumps(arr) -> bytes:
    arr = np.asarray(arr, dtype=np.float32)
    header = "shape: " + ",".join(str(d) for d in arr.shape) + "\n"
    return header.encode("ascii") + np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()


def loads(data: bytes) -> np.ndarray:
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(b"shape:"):
        raise ExecutionError("tensor file must start with a 'shape: d0,d1,...' line")
    text = data[len(b"shape:"):nl].decode("ascii").strip()
    try:
        shape = tuple(int(x) for x in text.split(",")) if text else ()
    except ValueError:
        raise ExecutionError(f"bad tensor shape header {text!r}") from None
    if any(d < 0 for d in shape):
        raise ExecutionError(f"bad tensor shape header {text!r}")
    body = data[nl + 1:]
    count = int(np.prod(shape, dtype=np.int64))
    if len(body) != 4 * count:
        raise ExecutionError(f"tensor of shape {list(shape)} needs {4 * count} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=_LE_F32).astype(np.float32).reshape(shape)


def save(path, arr) -> None:
    with open(path, "wb") as f:
        f.write(dumps(arr))


def load(path) -> np.ndarray:
    with open(path, "rb") as f:
        return loads(f.read())
