"""CPU evaluator for kernel loop-nest descriptions.

Kernels read and write flat f32 buffers.  The loop template walks the
iteration domain tile by tile; the reduce template walks tiles of output
rows over a (rows x reduced-extent) grid.  Elementwise and reduce math is
delegated to :mod:`disc.semantics`, the same code the eager oracle runs.
"""

from __future__ import annotations

import numpy as np

from .. import semantics as sem
from ..errors import ShapeMismatchError
from ..fusion.specialize import VECTOR_WIDTH, KernelSpec, resolve

_EW = frozenset(sem._BINARY) | frozenset(sem._UNARY)


def _strides(dims) -> list:
    out, acc = [], 1
    for d in reversed(dims):
        out.append(acc)
        acc *= d
    return out[::-1]


def _prod(xs) -> int:
    n = 1
    for x in xs:
        n *= x
    return n


def _ew(kind: str, args: list, vectorized: bool) -> np.ndarray:
    if not vectorized:
        return sem.elementwise(kind, *args)
    shape = np.broadcast_shapes(*(np.shape(a) for a in args))
    n = _prod(shape)
    main = n - n % VECTOR_WIDTH
    flat = [np.broadcast_to(a, shape).reshape(-1) for a in args]
    out = np.empty(n, np.float32)
    if main:
        out[:main] = sem.elementwise(kind, *(f[:main].reshape(-1, VECTOR_WIDTH) for f in flat)).reshape(-1)
    if main < n:
        out[main:] = sem.elementwise(kind, *(f[main:] for f in flat))
    return out.reshape(shape)


def _check_broadcast(in_dims, out_dims, bd, name) -> None:
    for i, axis in enumerate(bd):
        if in_dims[i] not in (1, out_dims[axis]):
            raise ShapeMismatchError(f"kernel {name}: cannot broadcast extent {in_dims[i]} to {out_dims[axis]}")


def _gather_index(coords: list, in_dims, bd) -> np.ndarray:
    """Flat operand index of a broadcast for the given result coordinates."""
    strides = _strides(in_dims)
    idx = 0
    for i, axis in enumerate(bd):
        if in_dims[i] != 1:
            idx = idx + coords[axis] * strides[i]
    return np.asarray(idx, dtype=np.int64)


class _Ctx:
    """Lazily computed coordinates of one tile in some iteration domain."""

    def __init__(self, dims, flat_fn):
        self.dims = dims
        self._flat_fn = flat_fn
        self._flat = None
        self._coords = None

    @property
    def flat(self):
        if self._flat is None:
            self._flat = self._flat_fn()
        return self._flat

    @property
    def coords(self):
        if self._coords is None:
            self._coords = list(np.unravel_index(self.flat, self.dims)) if self.dims else []
        return self._coords


def run_kernel(spec: KernelSpec, version: int, launch: tuple, inputs: list, outputs: list, env: dict,
               scalars=()) -> None:
    """Execute ``spec`` with the chosen version; ``outputs`` are preallocated flat arrays."""
    v = spec.versions[version]
    if v.vectorized and not _prod(resolve(spec.domain, env)) % VECTOR_WIDTH == 0:
        raise AssertionError(f"kernel {spec.name}: vectorized version on a domain not divisible by 4")
    if spec.template == "single":
        _run_single(spec, inputs, outputs, env, list(scalars))
    elif spec.template == "loop":
        _run_loop(spec, v, launch, inputs, outputs, env)
    else:
        _run_reduce(spec, v, launch, inputs, outputs, env)


def _resolved_bcasts(spec: KernelSpec, env: dict) -> dict:
    out = {}
    for j, k in enumerate(spec.body):
        if k.kind == "dynamic_broadcast_in_dim":
            ind, outd = resolve(k.in_shape[0], env), resolve(k.shape, env)
            _check_broadcast(ind, outd, k.attrs["broadcast_dims"], spec.name)
            out[j] = (ind, outd)
    return out


def _eval_op(k, j, vals, arg, ctx, bcasts, v) -> np.ndarray:
    if k.kind in _EW:
        return _ew(k.kind, [arg(a) for a in k.args], v.vectorized)
    if k.kind == "dynamic_broadcast_in_dim":
        src = k.args[0]
        if src[0] != "in":
            raise AssertionError("loop broadcasts read kernel parameters")  # pragma: no cover
        if v.speculate and k.speculable:
            return arg(src)
        ind, _ = bcasts[j]
        return arg(("gather", src[1], _gather_index(ctx.coords, ind, k.attrs["broadcast_dims"])))
    raise AssertionError(f"unexpected {k.kind} in fused body")  # pragma: no cover


def _run_loop(spec: KernelSpec, v, launch, inputs, outputs, env) -> None:
    dims = resolve(spec.domain, env)
    total = _prod(dims)
    tile, ntiles = launch
    bcasts = _resolved_bcasts(spec, env)
    for t in range(ntiles):
        lo, hi = t * tile, min(total, (t + 1) * tile)
        ctx = _Ctx(dims, lambda lo=lo, hi=hi: np.arange(lo, hi, dtype=np.int64))
        vals: dict = {}

        def arg(a):
            if a[0] == "v":
                return vals[a[1]]
            if a[0] == "in":
                return inputs[a[1]][lo:hi]
            if a[0] == "gather":
                return inputs[a[1]][a[2]]
            return np.float32(a[1])

        for j, k in enumerate(spec.body):
            vals[j] = _eval_op(k, j, vals, arg, ctx, bcasts, v)
        for out, j in zip(outputs, spec.outputs):
            out[lo:hi] = np.broadcast_to(vals[j], (hi - lo,))


def _run_reduce(spec: KernelSpec, v, launch, inputs, outputs, env) -> None:
    d_in = resolve(spec.domain, env)
    ridx = next(j for j, k in enumerate(spec.body) if k.role == "reduce")
    rop = spec.body[ridx]
    axes = rop.attrs["axes"]
    kept = [a for a in range(len(d_in)) if a not in axes]
    kept_dims = [d_in[a] for a in kept]
    red_dims = [d_in[a] for a in axes]
    rows, width = _prod(kept_dims), _prod(red_dims)
    tile, _ = launch
    per_tile = max(1, tile // max(width, 1))
    in_strides = _strides(d_in)
    bcasts = _resolved_bcasts(spec, env)
    red_coords = list(np.unravel_index(np.arange(width, dtype=np.int64), red_dims)) if red_dims else []
    for r0 in range(0, rows, per_tile):
        r1 = min(rows, r0 + per_tile)
        row_ids = np.arange(r0, r1, dtype=np.int64)
        kept_coords = list(np.unravel_index(row_ids, kept_dims)) if kept_dims else []
        grid = [None] * len(d_in)
        for a, c in zip(kept, kept_coords):
            grid[a] = c[:, None]
        for a, c in zip(axes, red_coords):
            grid[a] = c[None, :]
        flat_in = np.zeros((r1 - r0, width), dtype=np.int64)
        for a in range(len(d_in)):
            flat_in = flat_in + grid[a] * in_strides[a]
        grid_ctx = _Ctx(d_in, lambda: flat_in)
        grid_ctx._coords = [np.broadcast_to(c, flat_in.shape) for c in grid]
        out_ctx = _Ctx(kept_dims, lambda: row_ids)
        out_ctx._coords = [np.asarray(c) for c in kept_coords]
        vals: dict = {}

        def arg_for(ctx, role):
            def arg(a):
                if a[0] == "v":
                    return vals[a[1]]
                if a[0] == "in":
                    return inputs[a[1]][ctx.flat]
                if a[0] == "gather":
                    return inputs[a[1]][a[2]]
                return np.float32(a[1])
            return arg

        grid_arg = arg_for(grid_ctx, "grid")
        out_arg = arg_for(out_ctx, "out")
        for j, k in enumerate(spec.body):
            if k.role == "reduce":
                x = grid_arg(k.args[0])
                vals[j] = sem.reduce_rows(np.ascontiguousarray(np.broadcast_to(x, flat_in.shape)), k.attrs["mode"])
            elif k.role == "row" and k.kind == "dynamic_broadcast_in_dim" and k.args[0] == ("v", ridx):
                vals[j] = np.broadcast_to(vals[ridx][:, None], flat_in.shape)
            elif k.role == "out":
                vals[j] = _eval_op(k, j, vals, out_arg, out_ctx, bcasts, v)
            else:
                vals[j] = _eval_op(k, j, vals, grid_arg, grid_ctx, bcasts, v)
        for out, j in zip(outputs, spec.outputs):
            role = spec.body[j].role
            if role in ("reduce", "out"):
                out[r0:r1] = np.broadcast_to(vals[j], (r1 - r0,))
            else:
                out[flat_in] = np.broadcast_to(vals[j], flat_in.shape)


def _run_single(spec: KernelSpec, inputs, outputs, env, scalars) -> None:
    k = spec.body[0]
    arrays = [inputs[a[1]].reshape(resolve(s, env)) for a, s in zip(k.args, k.in_shape) if a[0] == "in"]
    x = arrays[0] if arrays else None
    out_dims = resolve(k.shape, env)

    def slots(name):
        return [scalars[i] for i in k.attrs[name]]

    if k.kind == "transpose":
        r = sem.transpose(x, k.attrs["perm"])
    elif k.kind == "dynamic_reshape":
        r = sem.reshape(x, out_dims)
    elif k.kind == "dynamic_slice":
        r = sem.dynamic_slice(x, slots("start"), slots("limit"), slots("strides"))
    elif k.kind == "dynamic_pad":
        r = sem.dynamic_pad(x, k.args[1][1], slots("low"), slots("high"), slots("interior"))
    elif k.kind == "concat":
        r = sem.concat(arrays, k.attrs["axis"])
    else:  # pragma: no cover
        raise AssertionError(f"no single-op kernel for {k.kind}")
    if list(r.shape) != list(out_dims):
        raise ShapeMismatchError(f"kernel {spec.name}: result {list(r.shape)} but plan expects {out_dims}")
    outputs[0][:] = r.reshape(-1)
