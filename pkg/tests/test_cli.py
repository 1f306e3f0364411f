import json
import math
import subprocess
import sys

import pytest

from kmrate import __version__
from kmrate.cli import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, fmt_float, main, to_json

SCHEMA = {"quantity", "value", "method", "params", "seed", "version"}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out)


# rate


def test_rate_constant_half(capsys):
    code, rec = run_json(capsys, "rate", "--schedule", "const:0.5", "--n", "200")
    assert code == EXIT_OK and set(rec) == SCHEMA
    v = rec["value"]
    assert v["product"] < 0.5642 and v["bound_ok"] is True
    assert v["sum_s"] == pytest.approx(50.0) and rec["version"] == __version__


def test_rate_zero_steps(capsys):
    code, rec = run_json(capsys, "rate", "--schedule", "const:0.3", "--n", "0")
    assert code == EXIT_OK and rec["value"]["product"] == 0.0 and rec["value"]["pn"] == 1.0


def test_rate_methods_agree(capsys):
    _, ex = run_json(capsys, "rate", "--schedule", "uniform-random:30", "--n", "20", "--seed", "4")
    _, rec = run_json(capsys, "rate", "--schedule", "uniform-random:30", "--n", "20", "--seed", "4", "--method", "recursion")
    assert rec["method"] == "recursion"
    assert abs(rec["value"]["pn"] - ex["value"]["pn"]) <= 1e-12
    _, mc = run_json(capsys, "rate", "--schedule", "uniform-random:30", "--n", "20", "--seed", "4", "--method", "mc", "--trials", "20000")
    assert "std_err" in mc["value"] and abs(mc["value"]["pn"] - ex["value"]["pn"]) <= 4 * mc["value"]["std_err"]


def test_rate_mc_is_byte_deterministic(capsys):
    argv = ["rate", "--schedule", "const:0.4", "--n", "30", "--method", "mc", "--trials", "5000", "--seed", "0x2a"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    _, c, _ = run(capsys, *argv[:-1], "43")
    assert a == b and a != c


def test_rate_csv(capsys):
    code, out, _ = run(capsys, "rate", "--schedule", "two-block:4,0.5", "--n", "8", "--format", "csv")
    lines = out.splitlines()
    assert code == EXIT_OK and lines[0] == "quantity,value" and "method,exact" in lines


def test_rate_schedule_file(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([0.5, 0.5, 0.5]))
    code, rec = run_json(capsys, "rate", "--schedule", f"file:{path}", "--n", "1")
    assert code == EXIT_OK and rec["value"]["pn"] == 0.75


@pytest.mark.parametrize(
    "argv",
    [
        ["rate", "--schedule", "const:1.5", "--n", "3"],
        ["rate", "--schedule", "bogus:1", "--n", "3"],
        ["rate", "--schedule", "file:/no/such/file", "--n", "3"],
        ["rate", "--schedule", "two-block:2,0.5", "--n", "9"],
        ["rate", "--schedule", "const:0.5"],
        ["rate", "--schedule", "const:0.5", "--n", "x"],
        ["ctable", "--schedule", "const:0.5", "--n", "201"],
        ["envelope", "--z-min", "2", "--z-max", "1"],
        ["sharpness", "--m", "0"],
        ["sharpness", "--m", "a,b"],
        ["verify", "nope"],
        ["verify", "catalan", "--cases", "0"],
        ["iterate", "{not json"],
        [],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE and err


# ctable


def test_ctable_csv(capsys):
    code, out, _ = run(capsys, "ctable", "--schedule", "const:0.3", "--n", "3")
    rows = [line.split(",") for line in out.splitlines()]
    assert code == EXIT_OK and rows[0] == ["m", "n", "c"]
    cells = {(int(m), int(n)): float(c) for m, n, c in rows[1:]}
    assert all(cells[(-1, n)] == 1.0 for n in range(4))
    assert all(cells[(n, n)] == 0.0 for n in range(4))
    assert cells[(0, 1)] == pytest.approx(0.3, abs=1e-15)


def test_ctable_check(capsys):
    code, out, _ = run(capsys, "ctable", "--schedule", "uniform-random", "--n", "60", "--check", "--seed", "9")
    last = out.splitlines()[-1]
    assert code == EXIT_OK and last.startswith("# recurrence_residual,")
    assert float(last.split(",")[1]) <= 1e-12
    code, rec = run_json(capsys, "ctable", "--schedule", "const:0.5", "--n", "5", "--check", "--format", "json", "--table-method", "fast")
    assert code == EXIT_OK and rec["method"] == "fast" and rec["value"]["recurrence_residual"] <= 1e-12


# envelope


def test_envelope_endpoints(capsys):
    code, out, _ = run(capsys, "envelope")
    rows = [list(map(float, line.split(","))) for line in out.splitlines()[1:]]
    assert code == EXIT_OK and len(rows) == 200
    assert rows[0][0] == pytest.approx(0.01) and rows[-1][0] == pytest.approx(700.0)
    assert rows[0][1] == pytest.approx(0.5303, abs=1e-2)
    assert abs(rows[-1][1] / math.sqrt(2 / math.pi) - 1) < 2e-3
    hs = [h for _, h in rows]
    assert all(a < b for a, b in zip(hs, hs[1:]))


# sharpness


def test_sharpness_csv(capsys):
    code, out, _ = run(capsys, "sharpness", "--m", "1,10,100,500")
    rows = [line.split(",") for line in out.splitlines()]
    assert code == EXIT_OK and rows[0] == ["m", "observed", "eta", "gap"]
    gaps = [float(r[3]) for r in rows[1:]]
    assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))
    assert abs(float(rows[-1][1]) - 0.4688) <= 2e-2


def test_sharpness_explicit_u(capsys):
    code, rec = run_json(capsys, "sharpness", "--m", "1", "--u", "0.5", "--format", "json")
    assert code == EXIT_OK and rec["value"][0]["observed"] == pytest.approx(0.5 * math.sqrt(0.5), abs=1e-15)


# verify


@pytest.mark.parametrize(
    "suite, cases",
    [("hoeffding", 60), ("catalan", 31), ("turan", 50), ("identity_hilbert", 200), ("triple_agreement", 5)],
)
def test_verify_suites_pass(suite, cases, capsys):
    code, rec = run_json(capsys, "verify", suite, "--cases", str(cases), "--trials", "20000", "--seed", "3")
    assert code == EXIT_OK
    assert rec["value"]["failed"] == 0 and rec["value"]["passed"] == cases
    assert all(c["pass"] for c in rec["value"]["cases"])


def test_verify_csv(capsys):
    code, out, _ = run(capsys, "verify", "catalan", "--cases", "5", "--format", "csv")
    assert code == EXIT_OK and out.splitlines()[0] == "case,pass,catalan,alternating_sum"
    assert out.splitlines()[-1] == "4,true,14,14"


def test_verify_failure_exits_two(capsys, monkeypatch):
    import kmrate.cli as cli

    monkeypatch.setitem(cli.SUITES, "catalan", (lambda c, s, t: [{"case": 0, "pass": False}], 1))
    code, _, _ = run(capsys, "verify", "catalan")
    assert code == EXIT_VIOLATION


def test_rate_violation_exits_two(capsys, monkeypatch):
    import kmrate.cli as cli
    from kmrate.bounds import RateReport

    monkeypatch.setattr(cli, "rate_report", lambda *a, **k: RateReport(1, 1.0, 1.0, 1.0, False))
    code, _, _ = run(capsys, "rate", "--schedule", "const:0.5", "--n", "1")
    assert code == EXIT_VIOLATION


# iterate


def test_iterate_inline_and_file(tmp_path, capsys):
    spec = {"operator": {"kind": "rotation"}, "schedule": {"kind": "const", "alpha": 0.5, "length": 16}, "x0": [1.0, 0.0]}
    code, rec = run_json(capsys, "iterate", json.dumps(spec))
    assert code == EXIT_OK and len(rec["value"]["residuals"]) == 17
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(spec))
    code, out, _ = run(capsys, "iterate", str(path), "--format", "csv")
    assert code == EXIT_OK and "# diameter_bound," in out


# manifests and replay


def test_manifest_and_replay(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "rate", "--schedule", "const:0.4", "--n", "25", "--method", "mc", "--trials", "3000", "--seed", "5", "--out", str(out))
    assert code == EXIT_OK
    manifest_path = tmp_path / "r.json.manifest.json"
    manifest = json.loads(manifest_path.read_text())
    assert manifest["subcommand"] == "rate" and manifest["seed"] == 5 and manifest["version"] == __version__
    assert manifest["params"]["trials"] == 3000 and manifest["outputs"][0]["quantity"] == "rate_report"
    code, rec = run_json(capsys, "replay", str(manifest_path))
    assert code == EXIT_OK and rec["reproduced"] is True
    manifest["output_sha256"] = "0" * 64
    manifest_path.write_text(json.dumps(manifest))
    code, rec = run_json(capsys, "replay", str(manifest_path))
    assert code == EXIT_VIOLATION and rec["reproduced"] is False


def test_manifest_on_stderr_without_out(capsys):
    code, out, err = run(capsys, "sharpness", "--m", "3")
    manifest = json.loads(err)
    assert manifest["subcommand"] == "sharpness" and manifest["output_file"] is None


def test_explicit_manifest_path(tmp_path, capsys):
    mpath = tmp_path / "sub" / "m.json"
    code, out, err = run(capsys, "verify", "catalan", "--cases", "3", "--manifest", str(mpath))
    assert code == EXIT_OK and json.loads(out)["value"]["passed"] == 3 and not err
    assert json.loads(mpath.read_text())["argv"] == ["verify", "catalan", "--cases", "3"]


def test_replay_bad_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(capsys, "replay", str(bad))[0] == EXIT_USAGE


# formatting and entry point


def test_seventeen_digit_formatting():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert float(fmt_float(math.pi)) == math.pi
    assert to_json({"a": [1, 0.5, None, True, float("nan")]}) == '{"a": [1, 0.5, null, true, null]}'


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "kmrate", "verify", "catalan", "--cases", "4"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["value"]["failed"] == 0
