from __future__ import annotations

import csv
import io
import json
import math
import shutil
import subprocess

import pytest

from relfacts.cli import fmt_number, main, parse_axis
from relfacts.errors import UsageError


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def error_of(err):
    lines = [line for line in err.splitlines() if line.strip()]
    assert len(lines) >= 1
    return json.loads(lines[-1])["error"]


# -- formatting ----------------------------------------------------------------


def test_fmt_number():
    assert fmt_number(0.1 + 0.2) == 0.3
    assert fmt_number(-1e-30) == -1e-30
    assert fmt_number(2 / 3) == 0.666666666667
    assert fmt_number(-0.0) == 0.0 and math.copysign(1, fmt_number(-0.0)) == 1
    assert fmt_number(3) == 3
    assert fmt_number(float("nan")) is None
    assert fmt_number("x") == "x"


# -- list ------------------------------------------------------------------------


def test_list_text():
    code, out, _ = run("list")
    assert code == 0
    for name in ("spin", "wigners-friend", "pipeline", "ewfs-chsh", "fr-structure"):
        assert f"{name}:" in out


def test_list_json():
    code, out, _ = run("list", "--json")
    doc = json.loads(out)
    spin = next(s for s in doc["scenarios"] if s["name"] == "spin")
    assert spin["parameters"][0]["name"] == "theta"
    assert spin["parameters"][0]["type"] == "float"


# -- run ---------------------------------------------------------------------------


def test_run_spin():
    code, out, _ = run("run", "spin", "--param", f"theta={math.pi / 2}")
    assert code == 0
    doc = json.loads(out)
    assert doc["scenario"] == "spin"
    assert doc["reports"][0]["probability"] == pytest.approx(0.5, abs=1e-12)


def test_run_wigners_friend():
    doc = json.loads(run("run", "wigners-friend")[1])
    audit = doc["reports"][0]
    assert (audit["lhs"], audit["rhs"], audit["deviation"]) == (1.0, 0.5, 0.5)


def test_run_chsh_rounding():
    doc = json.loads(run("run", "ewfs-chsh")[1])
    rec = doc["reports"][0]
    assert rec["quantum"] == pytest.approx(2 * math.sqrt(2), abs=1e-11)
    # values are rounded to 12 significant digits, not to an absolute grid
    assert len(repr(rec["quantum"]).replace(".", "").lstrip("0")) <= 13


def test_run_csv():
    code, out, _ = run("run", "wigners-friend", "--format", "csv")
    assert code == 0
    tables = out.strip().split("\n\n")
    assert len(tables) == 2
    rows = list(csv.reader(io.StringIO(tables[0])))
    assert rows[0][:3] == ["name", "kind", "lhs"]
    assert rows[1][0] == "audit"


def test_run_is_deterministic():
    a = run("run", "pipeline", "--param", "phi_spread=0.3", "--seed", "4")[1]
    b = run("run", "pipeline", "--param", "phi_spread=0.3", "--seed", "4")[1]
    c = run("run", "pipeline", "--param", "phi_spread=0.3", "--seed", "5")[1]
    assert a == b
    assert a != c
    assert json.loads(a)["parameters"]["seed"] == 4


def test_run_output_file(tmp_path):
    path = tmp_path / "out.json"
    code, out, _ = run("run", "spin", "--output", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["scenario"] == "spin"


def test_emit_config_round_trip(tmp_path):
    _, text, _ = run("run", "fr-structure", "--param", "n_env=3", "--emit-config")
    path = tmp_path / "fr.json"
    path.write_text(text)
    direct = json.loads(run("run", "fr-structure", "--param", "n_env=3")[1])["reports"]
    again = json.loads(run("run", "--config", str(path))[1])["reports"]
    for a, b in zip(direct, again):
        for k in a:
            if isinstance(a[k], float):
                assert b[k] == pytest.approx(a[k], abs=1e-11)
            else:
                assert a[k] == b[k]


def test_tolerance_override():
    code, _, err = run("run", "spin", "--tol", "zero_branch=0")
    assert code == 3
    assert error_of(err)["code"] == "validation"
    code, _, err = run("run", "spin", "--tol", "zero_branch=abc")
    assert code == 2


# -- errors ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv, status, code",
    [
        (["frobnicate"], 2, "usage"),
        (["run", "spin", "--bogus"], 2, "usage"),
        (["run"], 2, "usage"),
        (["run", "spin", "--param", "theta"], 2, "usage"),
        (["run", "nope"], 3, "validation"),
        (["run", "spin", "--param", "theta=7"], 3, "validation"),
        (["run", "spin", "--param", "alpha=1"], 3, "validation"),
        (["run", "--config", "/nonexistent/file.json"], 3, "validation"),
        (["sweep", "spin", "--axis", "theta="], 2, "usage"),
        (["sweep", "spin", "--axis", "theta=0..1"], 2, "usage"),
        (["sweep", "pipeline", "--axis", "n_env=0..3,0"], 2, "usage"),
        (["sweep", "pipeline", "--axis", "n_env=1..2", "--param", "n_env=3"], 2, "usage"),
    ],
)
def test_error_exit_codes(argv, status, code):
    rc, out, err = run(*argv)
    assert rc == status
    assert out == ""
    assert error_of(err)["code"] == code
    assert len(err.strip().splitlines()) == 1


def test_capacity_exit_code(monkeypatch):
    # the live state needs S, F and one environment qubit at once
    monkeypatch.setenv("RELFACTS_DIM_CAP", "4")
    rc, _, err = run("run", "pipeline", "--param", "n_env=2")
    assert rc == 4
    assert error_of(err)["code"] == "capacity"
    rc, _, err = run("sweep", "pipeline", "--axis", "n_env=1..2")
    assert rc == 4


def test_numeric_exit_code():
    rc, _, err = run("run", "spin", "--param", f"theta={math.pi}", "--tol", "zero_branch=0.6")
    assert rc == 5
    assert error_of(err)["code"] in ("undefined-conditional", "zero-branch")


# -- sweep -------------------------------------------------------------------------


def test_parse_axis():
    assert parse_axis("n=1..4", int) == ("n", [1, 2, 3, 4])
    assert parse_axis("x=0..1,3", float) == ("x", [0.0, 0.5, 1.0])
    assert parse_axis("x=0.5,2", float) == ("x", [0.5, 2.0])
    with pytest.raises(UsageError):
        parse_axis("x=,", float)
    with pytest.raises(UsageError):
        parse_axis("n=0..1,3", int)


def test_sweep_pipeline_epsilon():
    code, out, _ = run("sweep", "pipeline", "--axis", "n_env=0..6", "--param", f"phi={math.pi / 4}")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["n_env"] for r in rows] == list(range(7))
    for r in rows[1:]:
        assert r["epsilon.epsilon"] == pytest.approx(2.0 ** -r["n_env"], rel=1e-10)
        assert r["audit.deviation"] <= r["audit.bound"] + 1e-12


def test_sweep_spin_monotone():
    code, out, _ = run("sweep", "spin", "--axis", f"theta=0..{math.pi},17")
    rows = json.loads(out)["rows"]
    probs = [r["conditional.probability"] for r in rows]
    assert len(probs) == 17
    assert all(b <= a + 1e-12 for a, b in zip(probs, probs[1:]))
    assert probs[0] == 1.0 and probs[-1] == pytest.approx(0.0, abs=1e-12)


def test_sweep_workers_match_serial():
    serial = run("sweep", "pipeline", "--axis", "n_env=0..5", "--format", "csv")[1]
    threaded = run("sweep", "pipeline", "--axis", "n_env=0..5", "--format", "csv", "--workers", "3")[1]
    assert serial == threaded
    rows = list(csv.reader(io.StringIO(serial)))
    assert rows[0][0] == "n_env" and len(rows) == 7


def test_sweep_tolerance_reaches_workers():
    argv = ["sweep", "spin", "--axis", f"theta=3.0,{math.pi}", "--tol", "zero_branch=0.6"]
    assert run(*argv)[0] == 5
    assert run(*argv, "--workers", "2")[0] == 5


def test_sweep_strict_and_lenient():
    axis = "theta=0,1,7,2"
    rc, out, err = run("sweep", "spin", "--axis", axis)
    assert rc == 3 and out == ""
    rc, out, err = run("sweep", "spin", "--axis", axis, "--no-strict")
    assert rc == 0
    rows = json.loads(out)["rows"]
    assert [("error" in r) for r in rows] == [False, False, True, False]
    assert rows[2]["error"]["code"] == "validation"
    assert error_of(err)["code"] == "validation"
    assert len(err.strip().splitlines()) == 1
    rc, out, _ = run("sweep", "spin", "--axis", axis, "--no-strict", "--format", "csv")
    table = list(csv.reader(io.StringIO(out)))
    assert table[0] == ["theta", "conditional.probability", "error"]
    assert table[3][-1].startswith("validation:")
    assert table[4][-1] == ""


def test_lenient_csv_leading_failure():
    rc, out, err = run("sweep", "spin", "--axis", "theta=7,1", "--no-strict", "--format", "csv")
    assert rc == 0
    table = list(csv.reader(io.StringIO(out)))
    assert table[0] == ["theta", "conditional.probability", "error"]
    assert table[1][0] == "7.0" and table[1][2].startswith("validation:")
    assert table[2][2] == ""
    rc, out, _ = run("sweep", "spin", "--axis", "theta=7,8", "--no-strict", "--format", "csv")
    assert list(csv.reader(io.StringIO(out)))[0] == ["theta", "error"]


def test_lenient_csv_all_green_has_empty_error_column():
    out = run("sweep", "spin", "--axis", "theta=0,1", "--no-strict", "--format", "csv")[1]
    table = list(csv.reader(io.StringIO(out)))
    assert table[0][-1] == "error" and table[1][-1] == ""


def test_sweep_output_file(tmp_path):
    path = tmp_path / "sweep.csv"
    code, out, _ = run("sweep", "spin", "--axis", "theta=0,1", "--format", "csv", "--output", str(path))
    assert code == 0 and out == ""
    assert len(path.read_text().splitlines()) == 3


@pytest.mark.skipif(shutil.which("relfacts") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["relfacts", "run", "nope"], capture_output=True, text=True)
    assert proc.returncode == 3
    assert json.loads(proc.stderr)["error"]["code"] == "validation"
