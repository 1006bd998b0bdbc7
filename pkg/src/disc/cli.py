"""``disc`` command-line driver.

Exit codes: 0 success, 2 usage error, 3 compile error, 4 runtime error.
Failures print one line, ``error: <Kind>: <message>``, on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import fixtures, tensor_io
from .cache import PlanCache
from .dhlo.ir import dim_from_json
from .errors import CompileError, DiscError, ExecutionError, GraphParseError
from .frontend.graph import FrameworkGraph, graph_from_json, parse_graph
from .interpreter import eval_dhlo, eval_eager
from .pipeline import STAGES, CompileOptions, compile, compile_uncached, dump_writer
from .runtime.executor import Executor
from .runtime.plan import load_plan, save_plan

EXIT_USAGE, EXIT_COMPILE, EXIT_RUNTIME = 2, 3, 4

STATS_KEYS = ("compile_count", "cache_hits", "launch_count", "library_calls", "peak_bytes",
              "host_instruction_count", "alloc_calls", "allocator_cache_hits", "aliased_allocs")

BENCH_NOTICE = ("note: CPU reference-executor timings; absolute speedups are not comparable to GPU "
                "measurements of a production compiler")


class UsageError(DiscError):
    kind = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- stats file ---------------------------------------------------------------

def _stats_path() -> Path:
    if os.environ.get("DISC_STATS_FILE"):
        return Path(os.environ["DISC_STATS_FILE"])
    base = os.environ.get("DISC_CACHE_DIR") or os.path.join(os.path.expanduser("~"), ".cache", "disc")
    return Path(base) / "stats.json"


def _load_stats() -> dict:
    path = _stats_path()
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return {}


def _update_stats(**values) -> None:
    stats = _load_stats()
    for k, v in values.items():
        if k in ("compile_count", "cache_hits"):
            stats[k] = stats.get(k, 0) + v
        else:
            stats[k] = v
    path = _stats_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(stats, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


# -- inputs --------------------------------------------------------------------

def _read_graph(path: str) -> FrameworkGraph:
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.name in fixtures.names():
        return fixtures.load(p.name).graph
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise GraphParseError(f"cannot read graph file {path}: {e.strerror}") from None
    doc = None
    try:
        doc = json.loads(text)
    except ValueError:
        pass
    if isinstance(doc, dict) and "graph" in doc and "nodes" not in doc:
        return graph_from_json(doc["graph"])  # fixture document
    return parse_graph(text)


def _options(args) -> CompileOptions:
    return CompileOptions(static_fallback=args.static_fallback, inject_constraints=not args.no_injected_constraints,
                          fusion=not args.no_fusion)


def _parse_inputs(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--input expects id=path, got {item!r}")
        tid, path = item.split("=", 1)
        try:
            out[tid] = tensor_io.load(path)
        except OSError as e:
            raise ExecutionError(f"cannot read tensor file {path}: {e.strerror}") from None
    return out


def _print_outputs(ids, outputs, out_dir) -> None:
    for tid, arr in zip(ids, outputs):
        dims = ",".join(str(d) for d in arr.shape)
        checksum = float(np.sum(arr, dtype=np.float64)) if arr.size else 0.0
        print(f"output {tid} shape=[{dims}] sum={checksum:.6g}")
        if out_dir:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            tensor_io.save(Path(out_dir) / f"{tid}.tensor", arr)


def _format_stats(stats: dict, as_json: bool) -> str:
    if as_json:
        return json.dumps(stats, sort_keys=True)
    return "\n".join(f"{k}={stats[k]}" for k in STATS_KEYS if k in stats) + \
        "".join(f"\n{k}={v}" for k, v in sorted(stats.items()) if k not in STATS_KEYS)


# -- commands ------------------------------------------------------------------

def cmd_compile(args) -> int:
    g = _read_graph(args.graph)
    cache = PlanCache(os.environ.get("DISC_CACHE_DIR"))
    plan = compile(g, _options(args), cache=cache)
    save_plan(plan, args.output)
    _update_stats(compile_count=cache.compile_count, cache_hits=cache.cache_hits,
                  plan_launch_count=plan.launch_count, plan_library_calls=plan.library_calls,
                  plan_host_instruction_count=plan.host_instruction_count())
    kind = "static" if plan.static else "dynamic"
    print(f"wrote {args.output}: {kind} plan, {plan.launch_count} launches, {plan.library_calls} library calls")
    return 0


def cmd_run(args) -> int:
    inputs = _parse_inputs(args.input)
    if args.eager:
        g = _read_graph(args.plan)
        if args.dhlo:
            from .frontend.lower import lower_to_dhlo

            outputs, st = eval_dhlo(lower_to_dhlo(g)[0], inputs)
        else:
            outputs, st = eval_eager(g, inputs)
        _print_outputs(g.outputs, outputs, args.output_dir)
        print(f"eager op_count={st.op_count} peak_bytes={st.peak_bytes}")
        return 0
    plan = load_plan(args.plan)
    ex = Executor(plan, verify=args.verify)
    outputs = ex.run(inputs)
    _print_outputs([o.get("name", o["id"]) for o in plan.outputs], outputs, args.output_dir)
    _update_stats(**ex.last_stats.as_dict())
    return 0


def _binding_inputs(plan, binding: dict, rng) -> dict:
    """Inputs for one binding: input id -> shape list, or symbol name -> extent."""
    out = {}
    names = {f"s{k}": v for k, v in plan.symbols.items()}
    for spec in plan.inputs:
        if spec["id"] in binding and isinstance(binding[spec["id"]], list):
            shape = binding[spec["id"]]
        else:
            shape = []
            for d in spec["shape"]:
                d = dim_from_json(d)
                if isinstance(d, int):
                    shape.append(d)
                    continue
                name = names.get(repr(d), repr(d))
                if name not in binding:
                    raise UsageError(f"binding {binding} gives no extent for {name} (input {spec['id']})")
                shape.append(int(binding[name]))
        out[spec["id"]] = rng.uniform(-1, 1, size=shape).astype(np.float32)
    return out


def cmd_bench(args) -> int:
    plan = load_plan(args.plan)
    try:
        bindings = json.loads(Path(args.shapes).read_text(encoding="utf-8"))
    except OSError as e:
        raise ExecutionError(f"cannot read shapes file {args.shapes}: {e.strerror}") from None
    except ValueError as e:
        raise UsageError(f"shapes file is not JSON: {e}") from None
    if not isinstance(bindings, list) or not all(isinstance(b, dict) for b in bindings):
        raise UsageError("shapes file must hold a JSON list of binding objects")
    if args.reps < 20:
        raise UsageError("--reps must be at least 20")
    rng = np.random.default_rng(0)
    ex = Executor(plan)
    rows = []
    for b in bindings:
        inputs = _binding_inputs(plan, b, rng)
        wall, host, kern = [], [], []
        for _ in range(args.reps):
            t0 = time.perf_counter()
            ex.run(inputs)
            wall.append(time.perf_counter() - t0)
            host.append(ex.last_stats.host_time)
            kern.append(ex.last_stats.kernel_time)
        st = ex.last_stats
        rows.append({"binding": b, "wall_ms": 1e3 * statistics.median(wall), "host_ms": 1e3 * statistics.median(host),
                     "kernel_ms": 1e3 * statistics.median(kern), "launch_count": st.launch_count,
                     "library_calls": st.library_calls})
    eager = None
    if args.graph:
        g = _read_graph(args.graph)
        from .frontend.lower import lower_to_dhlo

        low = lower_to_dhlo(g, plan.metadata.get("options", {}).get("inject_constraints", True))[0]
        first = _binding_inputs(plan, bindings[0], rng) if bindings else {}
        eager = eval_dhlo(low, first)[1].op_count if bindings else None
    if args.json:
        doc = {"results": rows, "notice": BENCH_NOTICE}
        if eager is not None:
            doc["eager_op_count"] = eager
            doc["launch_ratio"] = plan.launch_count / eager if eager else None
        print(json.dumps(doc, sort_keys=True))
    else:
        for r in rows:
            print(f"shape={json.dumps(r['binding'], sort_keys=True)} wall_ms={r['wall_ms']:.3f} "
                  f"host_ms={r['host_ms']:.3f} kernel_ms={r['kernel_ms']:.3f} launch_count={r['launch_count']}")
        if eager is not None:
            print(f"eager_op_count={eager} launch_ratio={plan.launch_count / eager if eager else float('nan'):.3f}")
        print(BENCH_NOTICE)
    if rows:
        _update_stats(**ex.last_stats.as_dict())
    return 0


def cmd_dump_ir(args) -> int:
    g = _read_graph(args.graph)
    dumped: list = []
    on_stage = lambda name, text: dumped.append((name, text))  # noqa: E731
    if os.environ.get("DISC_DUMP_DIR"):
        writer = dump_writer(os.environ["DISC_DUMP_DIR"])

        def on_stage(name, text):
            dumped.append((name, text))
            writer(name, text)
    compile_uncached(g, _options(args), on_stage=on_stage)
    for name, text in dumped:
        if args.stage in (None, name):
            if args.stage is None:
                print(f"== {name} ==")
            sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    stats = _load_stats()
    stats.setdefault("compile_count", 0)
    stats.setdefault("cache_hits", 0)
    if args.plan:
        plan = load_plan(args.plan)
        stats["launch_count"] = plan.launch_count
        stats["library_calls"] = plan.library_calls
        stats["host_instruction_count"] = plan.host_instruction_count()
    print(_format_stats(stats, args.json))
    return 0


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="disc", description="Dynamic-shape tensor compiler")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def flags(sp):
        sp.add_argument("--static-fallback", action="store_true", help="fully specialize all-constant graphs")
        sp.add_argument("--no-injected-constraints", action="store_true",
                        help="drop shape constraints implied only by framework ops")
        sp.add_argument("--no-fusion", action="store_true", help="one kernel per op")

    c = sub.add_parser("compile", help="compile a graph to a plan")
    c.add_argument("graph")
    c.add_argument("-o", "--output", required=True)
    flags(c)
    c.set_defaults(fn=cmd_compile)

    r = sub.add_parser("run", help="execute a plan (or the eager oracle with --eager)")
    r.add_argument("plan", help="plan JSON, or a graph with --eager")
    r.add_argument("--input", action="append", metavar="ID=PATH")
    r.add_argument("--eager", action="store_true")
    r.add_argument("--dhlo", action="store_true", help="with --eager, interpret the lowered graph")
    r.add_argument("--verify", action="store_true", help="also run the shape consistency checks")
    r.add_argument("-o", "--output-dir")
    r.set_defaults(fn=cmd_run)

    b = sub.add_parser("bench", help="time a plan over a list of shape bindings")
    b.add_argument("plan")
    b.add_argument("--shapes", required=True)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--graph", help="source graph, to report the eager launch ratio")
    b.add_argument("--json", action="store_true")
    b.set_defaults(fn=cmd_bench)

    d = sub.add_parser("dump-ir", help="print intermediate stages of a compilation")
    d.add_argument("graph")
    d.add_argument("--stage", choices=STAGES)
    flags(d)
    d.set_defaults(fn=cmd_dump_ir)

    s = sub.add_parser("stats", help="print recorded counters")
    s.add_argument("plan", nargs="?")
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_stats)
    return p


_COMPILE_COMMANDS = {"compile", "dump-ir"}


def _error(e: BaseException) -> str:
    if isinstance(e, CompileError):
        cause = e.cause
        kind = getattr(cause, "kind", type(cause).__name__)
        return f"error: {kind}: {e}"
    kind = getattr(e, "kind", type(e).__name__)
    return f"error: {kind}: {e}".replace("\n", " ")


def main(argv=None) -> int:
    parser = _parser()
    args = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: compile, run, bench, dump-ir or stats")
        return args.fn(args)
    except UsageError as e:
        print(_error(e), file=sys.stderr)
        return EXIT_USAGE
    except (DiscError, OSError, ValueError) as e:
        print(_error(e), file=sys.stderr)
        command = getattr(args, "command", None)
        if isinstance(e, ExecutionError) or command in ("run", "bench"):
            return EXIT_RUNTIME
        return EXIT_COMPILE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
