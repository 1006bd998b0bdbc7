import json

import numpy as np
import pytest

from disc import fixtures, tensor_io
from disc.cli import main


@pytest.fixture(autouse=True)
def isolated_state(tmp_path, monkeypatch):
    monkeypatch.setenv("DISC_STATS_FILE", str(tmp_path / "stats.json"))
    monkeypatch.setenv("DISC_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.delenv("DISC_DUMP_DIR", raising=False)


def _only_error_line(err, kind):
    lines = [ln for ln in err.splitlines() if ln.strip()]
    assert len(lines) == 1 and lines[0].startswith(f"error: {kind}: "), err


def _stats(capsys):
    capsys.readouterr()
    assert main(["stats", "--json"]) == 0
    return json.loads(capsys.readouterr().out)


def test_compile_once_run_many_shapes(tmp_path, capsys):
    plan = tmp_path / "mlp.plan.json"
    assert main(["compile", "mlp", "-o", str(plan)]) == 0
    fx = fixtures.load("mlp")
    for batch in (3, 7):
        args = ["run", str(plan), "-o", str(tmp_path / f"out{batch}")]
        for vid, arr in fx.make_inputs({"B": batch}).items():
            path = tmp_path / f"{vid}{batch}.tensor"
            tensor_io.save(path, arr)
            args += ["--input", f"{vid}={path}"]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert f"shape=[{batch},8]" in out
        (result,) = (tmp_path / f"out{batch}").glob("*.tensor")
        assert tensor_io.load(result).shape == (batch, 8)
    stats = _stats(capsys)
    assert stats["compile_count"] == 1
    assert stats["launch_count"] >= 1


def test_recompiling_hits_the_disk_cache(tmp_path, capsys):
    for _ in range(2):
        assert main(["compile", "softmax", "-o", str(tmp_path / "p.json")]) == 0
    stats = _stats(capsys)
    assert (stats["compile_count"], stats["cache_hits"]) == (1, 1)


def test_dump_ir_constraints_stage(capsys):
    assert main(["dump-ir", "split", "--stage", "constraints"]) == 0
    out = capsys.readouterr().out
    assert "== constraints ==" not in out
    classes = [ln for ln in out.splitlines() if ln.startswith("dim class:")]
    assert classes and any(ln.count("==") >= 2 for ln in classes)
    assert main(["dump-ir", "split"]) == 0
    full = capsys.readouterr().out
    assert "== constraints ==" in full and "== plan ==" in full


def test_dump_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DISC_DUMP_DIR", str(tmp_path / "dumps"))
    assert main(["dump-ir", "chain"]) == 0
    assert len(list((tmp_path / "dumps").iterdir())) >= 8


def test_bench_reports_each_shape_and_launch_ratio(tmp_path, capsys):
    plan = tmp_path / "t.json"
    assert main(["compile", "transformer_block", "-o", str(plan)]) == 0
    shapes = tmp_path / "shapes.json"
    shapes.write_text(json.dumps([{"B": 1}, {"B": 9}]))
    capsys.readouterr()
    assert main(["bench", str(plan), "--shapes", str(shapes), "--graph", "transformer_block", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [r["binding"] for r in doc["results"]] == [{"B": 1}, {"B": 9}]
    for r in doc["results"]:
        assert {"wall_ms", "host_ms", "kernel_ms", "launch_count"} <= set(r)
        assert r["wall_ms"] >= r["host_ms"] >= 0
    assert doc["launch_ratio"] <= 0.5
    assert main(["bench", str(plan), "--shapes", str(shapes)]) == 0
    text = capsys.readouterr().out
    assert text.count("launch_count=") == 2 and "CPU" in text


def test_eager_run(tmp_path, capsys):
    x = tmp_path / "x.tensor"
    tensor_io.save(x, np.ones((2, 5), np.float32))
    assert main(["run", "softmax", "--eager", "--input", f"x={x}"]) == 0
    out = capsys.readouterr().out
    assert "op_count=1" in out
    assert main(["run", "softmax", "--eager", "--dhlo", "--input", f"x={x}"]) == 0
    assert "op_count=7" in capsys.readouterr().out


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    _only_error_line(capsys.readouterr().err, "UsageError")
    assert main(["compile", "mlp"]) == 2
    _only_error_line(capsys.readouterr().err, "UsageError")
    assert main(["frobnicate"]) == 2
    _only_error_line(capsys.readouterr().err, "UsageError")


def test_compile_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"inputs": [{"id": "x", "shape": [2]}], "nodes": [{"id": "y", "op": "Frob", '
                   '"inputs": ["x"]}], "outputs": ["y"]}')
    assert main(["compile", str(bad), "-o", str(tmp_path / "p.json")]) == 3
    _only_error_line(capsys.readouterr().err, "GraphValidationError")
    assert main(["compile", str(tmp_path / "missing.json"), "-o", str(tmp_path / "p.json")]) == 3
    _only_error_line(capsys.readouterr().err, "GraphParseError")


def test_runtime_errors_exit_4(tmp_path, capsys):
    plan = tmp_path / "p.json"
    assert main(["compile", "chain", "-o", str(plan)]) == 0
    capsys.readouterr()
    assert main(["run", str(plan)]) == 4
    _only_error_line(capsys.readouterr().err, "ExecutionError")
    x = tmp_path / "x.tensor"
    tensor_io.save(x, np.ones(3, np.float32))
    assert main(["run", str(plan), "--input", f"x={x}"]) == 4
    _only_error_line(capsys.readouterr().err, "ShapeMismatchError")
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert main(["run", str(junk)]) == 4
    _only_error_line(capsys.readouterr().err, "PlanFormatError")
