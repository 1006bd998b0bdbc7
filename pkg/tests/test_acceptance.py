"""End-to-end exit criteria; each test records one PASS/FAIL line."""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from disc import fixtures
from disc.cache import PlanCache
from disc.fusion.specialize import effective_guards
from disc.frontend import lower_to_dhlo, validate
from disc.interpreter import eval_dhlo, eval_framework
from disc.pipeline import CompileOptions, compile as compile_cached, compile_uncached
from disc.randgraph import make_inputs, random_binding, random_graph
from disc.runtime import Executor, executor as executor_mod
from disc.shape_analysis.program import emit_shape_program, evaluate
from disc.shape_analysis.propagation import infer

from helpers import (
    bound_value, brute_pad_extent, brute_slice_extent, max_rel_err, pad_param_graph, rel_err, slice_param_graph,
)

pytestmark = pytest.mark.acceptance

N_GRAPHS = 200
BINDINGS_PER_GRAPH = 5


@pytest.fixture(scope="module")
def random_cases():
    """200 random graphs, each with 5 bindings and oracle outputs."""
    cases = []
    for seed in range(N_GRAPHS):
        g = random_graph(seed, max_nodes=12, max_rank=3)
        rng = np.random.default_rng(10_000 + seed)
        runs = []
        for _ in range(BINDINGS_PER_GRAPH):
            binding = random_binding(g, rng)
            inputs = make_inputs(g, binding, rng)
            runs.append((binding, inputs))
        cases.append((seed, g, runs))
    return cases


def _dynamic_fixtures():
    return [f for f in fixtures.load_all() if not f.is_static]


def _distinct_bindings(fx, count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    if len(fx.symbols) == 1:
        sym = fx.symbols[0]
        mult = fx._multiples().get(sym, 1)
        values = rng.permutation(count) * mult
        return [{sym: int(v)} for v in values]
    seen, out = set(), []
    while len(out) < count:
        b = fx.random_binding(rng, 0, 30)
        key = tuple(sorted(b.items()))
        if key not in seen:
            seen.add(key)
            out.append(b)
    return out


def test_1_oracle_equivalence(random_cases, acceptance):
    t0 = time.perf_counter()
    worst, failures, runs = 0.0, [], 0
    for seed, g, bindings in random_cases:
        plan = compile_uncached(g).plan
        ex = Executor(plan)
        for binding, inputs in bindings:
            ref, _ = eval_framework(g, inputs)
            err = max_rel_err(ex.run(inputs), ref)
            runs += 1
            worst = max(worst, err)
            if not err <= 1e-5:
                failures.append((seed, binding, err))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed <= 60.0
    acceptance(1, "oracle equivalence", ok,
               f"{runs} runs, max rel err {worst:.2e}, {len(failures)} mismatches, {elapsed:.1f}s (limit 60s)")
    assert not failures, failures[:5]
    assert elapsed <= 60.0


def test_2_compile_once_adaptivity(acceptance):
    t0 = time.perf_counter()
    problems, checked = [], []
    for k, fx in enumerate(_dynamic_fixtures()):
        cache = PlanCache()
        worst = 0.0
        plans = set()
        bindings = _distinct_bindings(fx, 100, seed=k)
        assert len({tuple(sorted(b.items())) for b in bindings}) == 100
        for i, binding in enumerate(bindings):
            plan = compile_cached(fx.graph, cache=cache)
            plans.add(id(plan))
            inputs = fx.make_inputs(binding, seed=i)
            ref, _ = eval_framework(fx.graph, inputs)
            worst = max(worst, max_rel_err(Executor(plan).run(inputs), ref))
        counts = (cache.compile_count, cache.cache_hits, len(plans))
        checked.append(fx.name)
        if counts != (1, 99, 1) or not worst <= 1e-5:
            problems.append((fx.name, counts, worst))
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed <= 30.0
    acceptance(2, "compile-once adaptivity", ok,
               f"{len(checked)} fixtures x 100 bindings, compile_count=1 cache_hits=99 each, "
               f"{len(problems)} problems, {elapsed:.1f}s (limit 30s)")
    assert not problems, problems
    assert elapsed <= 30.0


def _eager_op_count(fx) -> int:
    g, _ = lower_to_dhlo(validate(fx.graph))
    binding = fx.bindings[0]
    _, stats = eval_dhlo(g, fx.make_inputs(binding))
    return stats.op_count


def test_3_launch_count_reduction(acceptance):
    tb = fixtures.load("transformer_block")
    sm = fixtures.load("softmax")
    details, ok = [], True
    for fx in (tb, sm):
        plan = compile_uncached(fx.graph).plan
        eager = _eager_op_count(fx)
        binding = fx.bindings[-1]
        inputs = fx.make_inputs(binding)
        out = Executor(plan)
        res = out.run(inputs)
        ref, _ = eval_framework(fx.graph, inputs)
        launches = out.last_stats.launch_count
        assert launches == plan.launch_count
        ok &= max_rel_err(res, ref) <= 1e-5
        if fx is tb:
            ok &= launches <= 0.5 * eager
            details.append(f"transformer {launches}/{eager} = {launches / eager:.2f} (<= 0.5)")
        else:
            ok &= launches == 2 and eager == 7
            details.append(f"softmax {launches} launches vs {eager} eager ops")
    acceptance(3, "launch-count reduction", ok, "; ".join(details))
    assert ok


def test_4_constraint_ablation(acceptance):
    fx = fixtures.load("split")
    with_c = compile_uncached(fx.graph, CompileOptions(inject_constraints=True)).plan
    without = compile_uncached(fx.graph, CompileOptions(inject_constraints=False)).plan
    worst = 0.0
    for i, binding in enumerate(fx.bindings):
        inputs = fx.make_inputs(binding, seed=i)
        ref, _ = eval_framework(fx.graph, inputs)
        for plan in (with_c, without):
            worst = max(worst, max_rel_err(Executor(plan).run(inputs), ref))
    ok = with_c.launch_count < without.launch_count and worst == 0.0
    acceptance(4, "constraint ablation", ok,
               f"launch_count with={with_c.launch_count} < without={without.launch_count}, max rel err {worst:.1e}")
    assert with_c.launch_count < without.launch_count
    assert worst == 0.0


def _peak_live_blocks(trace, n_instructions: int) -> int:
    """Most non-input memory blocks held at once, from a run trace.

    A buffer holds its block from definition to dealloc; a retained block
    stays held until the buffer aliasing it is defined.
    """
    by_block: dict = {}
    for b, blk in trace.block.items():
        if trace.kinds.get(b) != "input":
            by_block.setdefault(blk, []).append(b)
    spans = []
    for blk, bufs in by_block.items():
        bufs.sort(key=lambda b: trace.defined.get(b, n_instructions))
        for i, b in enumerate(bufs):
            start = trace.defined.get(b, n_instructions)
            end = trace.dealloc.get(b, n_instructions)
            if b in trace.retained and i + 1 < len(bufs):
                end = max(end, trace.defined.get(bufs[i + 1], n_instructions))
            spans.append((blk, start, end))
    return max((len({blk for blk, lo, hi in spans if lo <= pc <= hi}) for pc in range(n_instructions + 1)),
               default=0)


def test_5_buffer_safety_and_promptness(random_cases, acceptance):
    overlaps, late, runs = [], [], 0

    def check(name, plan, inputs):
        nonlocal runs
        ex = Executor(plan, instrument=True)
        ex.run(inputs)
        tr = ex.last_stats.trace
        runs += 1
        if tr.overlaps():
            overlaps.append((name, tr.overlaps()))
        if tr.late_deallocs():
            late.append((name, tr.late_deallocs()))

    for fx in fixtures.load_all():
        for fusion in (True, False):
            plan = compile_uncached(fx.graph, CompileOptions(fusion=fusion)).plan
            for i, binding in enumerate(fx.bindings):
                check(fx.name, plan, fx.make_inputs(binding, seed=i))
    for seed, g, bindings in random_cases:
        plan = compile_uncached(g).plan
        for _, inputs in bindings:
            check(f"random{seed}", plan, inputs)

    chain = fixtures.load("chain")
    chain_len = len(chain.graph.nodes)
    peaks = {}
    for fusion in (True, False):
        plan = compile_uncached(chain.graph, CompileOptions(fusion=fusion)).plan
        ex = Executor(plan, instrument=True)
        ex.run(chain.make_inputs(chain.bindings[1]))
        peaks[fusion] = _peak_live_blocks(ex.last_stats.trace, len(plan.program))
    ok = not overlaps and not late and chain_len == 10 and max(peaks.values()) <= 3
    acceptance(5, "buffer safety and promptness", ok,
               f"{runs} instrumented runs, {len(overlaps)} with overlaps, {len(late)} with late deallocs; "
               f"chain length {chain_len} peak buffers fused={peaks[True]} unfused={peaks[False]} (<= 3)")
    assert not overlaps, overlaps[:3]
    assert not late, late[:3]
    assert chain_len == 10
    assert max(peaks.values()) <= 3


def test_6_shape_program_correctness(acceptance):
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    g, out = slice_param_graph()
    cs = infer(g)
    sp = emit_shape_program(g, cs)
    slice_bad = 0
    for _ in range(1000):
        n = int(rng.integers(0, 40))
        start = int(rng.integers(0, n + 1))
        limit = int(rng.integers(0, n + 1))
        stride = int(rng.integers(1, 9))
        _, env = evaluate(sp, [(n,), (start,), (limit,), (stride,)])
        slice_bad += bound_value(cs, env, out) != brute_slice_extent(start, limit, stride)
    g, out = pad_param_graph()
    cs = infer(g)
    sp = emit_shape_program(g, cs)
    pad_bad = 0
    for _ in range(1000):
        n, low, high, interior = (int(v) for v in rng.integers(0, 12, size=4))
        _, env = evaluate(sp, [(n,), (low,), (high,), (interior,)])
        pad_bad += bound_value(cs, env, out) != brute_pad_extent(n, low, high, interior)
    elapsed = time.perf_counter() - t0
    ok = slice_bad == 0 and pad_bad == 0 and elapsed <= 5.0
    acceptance(6, "shape-program correctness", ok,
               f"slice mismatches {slice_bad}/1000, pad mismatches {pad_bad}/1000, {elapsed:.2f}s (limit 5s)")
    assert slice_bad == 0 and pad_bad == 0
    assert elapsed <= 5.0


def test_7_static_fallback_agreement(acceptance):
    statics = [f for f in fixtures.load_all() if f.is_static]
    problems, rows = [], []
    for fx in statics:
        dyn = compile_uncached(fx.graph).plan
        sta = compile_uncached(fx.graph, CompileOptions(static_fallback=True)).plan
        inputs = fx.make_inputs({})
        ex_d, ex_s = Executor(dyn), Executor(sta)
        out_d, out_s = ex_d.run(inputs), ex_s.run(inputs)
        err = max_rel_err(out_s, out_d)
        hd, hs = dyn.host_instruction_count(), sta.host_instruction_count()
        rd, rs = ex_d.last_stats.host_instructions, ex_s.last_stats.host_instructions
        rows.append(f"{fx.name} {hs}<{hd}")
        if not (sta.static and err <= 1e-6 and hs < hd and rs < rd and sta.eval_shape_count == 0):
            problems.append((fx.name, err, hs, hd, rs, rd, sta.eval_shape_count))
    ok = bool(statics) and not problems
    acceptance(7, "static fallback agreement", ok,
               f"{len(statics)} static fixtures, host instructions static<dynamic: {', '.join(rows)}; "
               f"0 EvalShape in static plans")
    assert statics
    assert not problems, problems


def test_8_version_selection_soundness(monkeypatch, acceptance):
    real = executor_mod.run_kernel
    seen = {"launches": 0, "specialized": 0, "kernels": set(), "bad": [], "guards": []}

    def checking(spec, version, launch, inputs, outputs, env, scalars=()):
        real(spec, version, launch, inputs, outputs, env, scalars)
        catch_all = len(spec.versions) - 1
        matches = sum(effective_guards(spec.versions, env))
        if matches != 1:
            seen["guards"].append((spec.name, matches))
        seen["launches"] += 1
        seen["kernels"].add(spec.name)
        if version != catch_all:
            seen["specialized"] += 1
            ref = [np.empty_like(o) for o in outputs]
            real(spec, catch_all, launch, inputs, ref, env, scalars)
            err = max_rel_err(outputs, ref)
            if not err <= 1e-6:
                seen["bad"].append((spec.name, spec.versions[version].name, err))

    monkeypatch.setattr(executor_mod, "run_kernel", checking)
    graphs = [(fx.name, fx.graph, fx) for fx in fixtures.load_all()]
    graphs += [(f"random{s}", random_graph(s), None) for s in range(40)]
    n_specs = 0
    for name, g, fx in graphs:
        plan = compile_uncached(g).plan
        n_specs += len(plan.kernels)
        ex = Executor(plan)
        rng = np.random.default_rng(8)
        for i in range(50):
            if fx is not None:
                binding = fx.random_binding(rng, 0, 16)
                inputs = fx.make_inputs(binding, seed=i)
            else:
                binding = random_binding(g, rng, high=8)
                inputs = make_inputs(g, binding, rng)
            ex.run(inputs)
    ok = not seen["bad"] and not seen["guards"] and seen["specialized"] > 0
    acceptance(8, "version-selection soundness", ok,
               f"{n_specs} kernel specs x 50 bindings, {seen['launches']} launches, "
               f"{seen['specialized']} ran a specialized version and matched the catch-all; "
               f"{len(seen['guards'])} bindings without exactly one matching guard")
    assert not seen["bad"], seen["bad"][:5]
    assert not seen["guards"], seen["guards"][:5]
    assert seen["specialized"] > 0


def test_9_determinism(tmp_path, acceptance):
    differing = []
    for fx in fixtures.load_all():
        for opts in (CompileOptions(), CompileOptions(static_fallback=True)):
            a = compile_uncached(fx.graph, opts).plan.dumps()
            b = compile_uncached(fx.graph, opts).plan.dumps()
            if a != b:
                differing.append((fx.name, opts))
    outs = []
    for seed in ("1", "2"):
        path = tmp_path / f"plan{seed}.json"
        env = dict(os.environ, PYTHONHASHSEED=seed)
        env.pop("DISC_CACHE_DIR", None)
        subprocess.run([sys.executable, "-m", "disc", "compile", "transformer_block", "-o", str(path)],
                       check=True, env=env, capture_output=True)
        outs.append(path.read_bytes())
    cross = outs[0] == outs[1]
    ok = not differing and cross
    acceptance(9, "determinism", ok,
               f"{len(fixtures.names())} fixtures x 2 option sets byte-identical in-process; "
               f"across hash seeds: {'identical' if cross else 'DIFFERENT'}")
    assert not differing, differing
    assert cross


def test_rel_err_helper():
    assert rel_err([1.0, np.nan, np.inf], [1.0, np.nan, np.inf]) == 0.0
    assert rel_err([np.nan], [1.0]) == float("inf")
    assert rel_err([np.inf], [-np.inf]) == float("inf")
    assert rel_err(np.zeros((2, 0)), np.zeros((2, 0))) == 0.0
    assert rel_err(np.zeros(2), np.zeros(3)) == float("inf")
