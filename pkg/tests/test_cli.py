import json
import subprocess
import sys

import pytest

from moe_replica.cli import main
from moe_replica.trace import load_trace


def run(*argv):
    return subprocess.run(
        [sys.executable, "-m", "moe_replica", *map(str, argv)], capture_output=True, text=True
    )


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "t.crft"
    assert main(["gen-trace", "--layers", "4", "--experts", "16", "--batches", "8",
                 "--tokens", "256", "--topk", "2", "--seed", "5", "-o", str(path)]) == 0
    return path


def test_gen_trace(trace_file, tmp_path):
    trace = load_trace(trace_file)
    assert trace.shape == (8, 4, 16)
    as_json = tmp_path / "t.json"
    main(["gen-trace", "--layers", "4", "--experts", "16", "--batches", "8",
          "--tokens", "256", "--topk", "2", "--seed", "5", "-o", str(as_json)])
    assert load_trace(as_json) == trace


def test_gen_trace_rejects_unknown_suffix(tmp_path, capsys):
    assert main(["gen-trace", "--layers", "1", "--experts", "2", "-o", str(tmp_path / "x.bin")]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_required_option_is_usage_error():
    result = run("gen-trace", "--layers", "4", "-o", "x.crft")
    assert result.returncode == 2
    assert "--experts" in result.stderr


def test_estimate(trace_file, capsys):
    assert main(["estimate", str(trace_file), "--gpus", "4", "--nodes", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["candidates"] == [1, 2, 4]
    assert len(doc["gains"]) == 4 and len(doc["baseline"]) == 4


def test_plan_evaluate_compare_sweep(trace_file, tmp_path, capsys):
    plan = tmp_path / "plan.json"
    auto = tmp_path / "auto.json"
    assert main(["plan", str(trace_file), "--gpus", "4", "--nodes", "2", "-R", "2", "-o", str(plan)]) == 0
    assert main(["plan", str(trace_file), "--gpus", "4", "--nodes", "2", "--auto-r", "-o", str(auto)]) == 0
    assert json.loads(auto.read_text())["provenance"]["mode"] == "auto-dp"

    assert main(["evaluate", str(trace_file), str(plan)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "layer,baseline,plan,gain"
    assert lines[-1].startswith("aggregate,") and len(lines) == 6

    assert main(["evaluate", str(trace_file), str(plan), "--format", "json"]) == 0
    assert "aggregate" in json.loads(capsys.readouterr().out)

    assert main(["compare", str(trace_file), str(plan), str(plan)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["memory_ratio"] == 1.0 and doc["aggregate_delta"] == 0.0

    assert main(["compare", str(trace_file), str(plan), str(auto), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("layer,first,second,delta\n")

    assert main(["sweep", str(trace_file), "--gpus", "4", "--nodes", "2", "--budgets", "0,1,2"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 4
    objectives = [float(r.split(",")[3]) for r in rows[1:]]
    assert objectives == sorted(objectives)


def test_plan_output_is_byte_identical(trace_file, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        main(["plan", str(trace_file), "--gpus", "4", "--nodes", "2", "-R", "1", "-o", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_plan_to_stdout(trace_file, capsys):
    assert main(["plan", str(trace_file), "--gpus", "4", "-R", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["gpus"] == 4


def test_dimension_mismatch_exits_with_error(trace_file, tmp_path, capsys):
    plan = tmp_path / "plan.json"
    other = tmp_path / "other.crft"
    main(["plan", str(trace_file), "--gpus", "4", "-R", "1", "-o", str(plan)])
    main(["gen-trace", "--layers", "3", "--experts", "16", "-o", str(other)])
    capsys.readouterr()
    assert main(["evaluate", str(other), str(plan)]) == 1
    assert "trace has" in capsys.readouterr().err


def test_different_trace_warns(trace_file, tmp_path, capsys):
    plan = tmp_path / "plan.json"
    other = tmp_path / "other.crft"
    main(["plan", str(trace_file), "--gpus", "4", "-R", "1", "-o", str(plan)])
    main(["gen-trace", "--layers", "4", "--experts", "16", "--seed", "77", "-o", str(other)])
    capsys.readouterr()
    assert main(["evaluate", str(other), str(plan)]) == 0
    assert "different trace" in capsys.readouterr().err


def test_bad_budgets_and_missing_file(trace_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", str(trace_file), "--gpus", "4", "--budgets", "1,x"])
    assert exc.value.code == 2
    assert main(["estimate", "/nonexistent.crft", "--gpus", "4"]) == 1


def test_console_entry_point(trace_file):
    result = run("evaluate", trace_file, trace_file)
    assert result.returncode == 1
    assert result.stderr.startswith("moe-replica evaluate: error:")
