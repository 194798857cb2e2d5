import csv
import io
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from psbf import bench, spec_io
from psbf.cli import main
from psbf.examples import robot_arm

SPECS = Path(__file__).resolve().parents[1] / "specs"


@pytest.fixture
def arm(tmp_path):
    p = tmp_path / "arm.spec"
    spec_io.dump(robot_arm(), p)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_validate(capsys, arm, tmp_path):
    code, out, _ = run(capsys, "validate", arm)
    assert code == 0 and ": ok (3 state vars" in out
    assert "note: clustering singletons" in out
    bad = tmp_path / "bad.spec"
    bad.write_text(arm.read_text().replace("0.9", "0.7", 1))
    code, out, _ = run(capsys, "validate", bad)
    assert code == 1


def test_unreadable_and_usage_errors(capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "missing.spec")[0] == 1
    (tmp_path / "junk.spec").write_text("{not json")
    assert run(capsys, "passivity", tmp_path / "junk.spec")[0] == 1
    assert run(capsys, "run", tmp_path / "junk.spec", "--filter", "kalman")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_passivity_matches_golden(capsys, tmp_path):
    for name in ("arm3", "swap"):
        code, out, _ = run(capsys, "passivity", SPECS / f"{name}.spec", "--format", "csv")
        assert code == 0
        assert out == (SPECS / f"{name}.passivity.csv").read_text()
    target = tmp_path / "p.csv"
    assert run(capsys, "--format", "csv", "passivity", SPECS / "arm3.spec", "-o", target)[0] == 0
    got = rows(target.read_text())
    turn1 = {r["variable"]: r for r in got if r["action"] == "turn1"}
    assert turn1["theta1"]["verdict"] == "active"
    assert turn1["theta3"]["phi"] == "theta2"


def test_passivity_table(capsys, arm):
    code, out, _ = run(capsys, "passivity", arm)
    assert code == 0
    assert out.splitlines()[0].split() == ["action", "variable", "verdict", "phi", "reachable"]


def test_cluster(capsys, arm):
    code, out, _ = run(capsys, "cluster", arm, "--strategy", "singleton", "--format", "csv")
    assert code == 0
    got = rows(out)
    assert len(got) == 3 and all(r["A1"].startswith("violated") for r in got)
    assert {r["A2"] for r in got} == {"satisfied"}
    code, out, _ = run(capsys, "cluster", arm, "--strategy", "components", "--save", "comp",
                       "--format", "csv")
    assert code == 0 and rows(out)[0]["A1"] == "satisfied"
    assert spec_io.load(arm).clusterings["comp"] == [[0, 1, 2]]
    assert run(capsys, "cluster", arm, "--strategy", "max_size(0)")[0] == 1


def test_gen_single_and_batch(capsys, tmp_path):
    one = tmp_path / "one.spec"
    assert run(capsys, "gen", "--preset", "S", "--passivity", 40, "--seed", 7, "-o", one)[0] == 0
    assert one.read_text() == (SPECS / "synth-S-p40-s7.spec").read_text()
    out = tmp_path / "batch"
    assert run(capsys, "gen", "--preset", "S", "--count", 3, "--seed", 1, "-o", out)[0] == 0
    assert len(list(out.glob("*.spec"))) == 3
    assert run(capsys, "gen", "--preset", "S", "--count", 2)[0] == 1
    assert run(capsys, "gen", "--preset", "S", "--passivity", 120)[0] == 1


def test_run_outputs(capsys, arm):
    code, out, _ = run(capsys, "run", arm, "--filter", "psbf", "--steps", 5, "--no-timing")
    assert code == 0
    got = rows(out)
    assert [int(r["step"]) for r in got] == list(range(5))
    assert all(float(r["kl_bits"]) >= 0 for r in got)
    again = run(capsys, "run", arm, "--filter", "psbf", "--steps", 5, "--no-timing")[1]
    assert again == out
    bk = rows(run(capsys, "run", arm, "--filter", "bk", "--steps", 5, "--no-timing")[1])
    assert [r["action"] for r in bk] == [r["action"] for r in got]


def test_run_degenerate_exit(capsys, tmp_path):
    p = tmp_path / "det.spec"
    spec_io.dump(robot_arm(accuracy=1.0), p)
    code, _, err = run(capsys, "run", p, "--filter", "pf", "--particles", 1, "--steps", 30,
                       "--no-timing")
    assert code == 2 and "degenerate" in err
    code = run(capsys, "--on-zero-likelihood", "uniform-reset", "run", p, "--filter", "pf",
               "--particles", 1, "--steps", 30, "--no-timing")[0]
    assert code == 0


def test_bench_small(capsys, tmp_path):
    rec, summ = tmp_path / "r.csv", tmp_path / "s.csv"
    code, out, _ = run(capsys, "bench", "--presets", "S", "--passivity", 0, 40, "--processes", 2,
                       "--steps", 4, "--no-timing", "-o", rec, "--summary", summ, "--format", "csv")
    assert code == 0
    records = bench.parse_records(rec.read_text())
    assert len(records) == 2 * 2 * 2 * 4
    assert out == summ.read_text()
    assert rows(out)[0]["preset"] == "S"


def test_warehouse_cmd(capsys, tmp_path):
    target = tmp_path / "trace.csv"
    code, _, err = run(capsys, "warehouse", "--steps", 5, "--no-timing", "-o", target)
    assert code == 0 and "tasks completed" in err
    assert len(rows(target.read_text())) == 5


def test_console_script(arm):
    exe = shutil.which("psbf")
    cmd = [exe] if exe else [sys.executable, "-m", "psbf.cli"]
    res = subprocess.run(cmd + ["validate", str(arm)], capture_output=True, text=True)
    assert res.returncode == 0 and ": ok (" in res.stdout


def test_format_flag_per_command(capsys, arm):
    assert run(capsys, "run", arm, "--steps", 2, "--no-timing")[1].startswith("step,action")
    table = run(capsys, "--format", "table", "run", arm, "--steps", 2, "--no-timing")[1]
    assert table.splitlines()[1].startswith("----")
    assert run(capsys, "passivity", arm)[1].splitlines()[1].startswith("----")
