import csv
import json
import os

import jsonschema
import numpy as np
import pytest

from langevin_bounce import cli
from langevin_bounce._io import sha256_file
from langevin_bounce.analytic import C_CR
from langevin_bounce.verify import REPORT_SCHEMA


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def manifest(d):
    with open(os.path.join(d, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)


# ---- kc --------------------------------------------------------------------------------

def test_kc_point(capsys):
    code, out = run(["kc", "--c", 0.0901699], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert data["k"] == pytest.approx(0.1, abs=1e-6)
    assert data["c_cr"] == pytest.approx(C_CR)
    assert {"drift", "mu_up", "c_prime"} <= set(data)


def test_kc_domain_error(capsys):
    code, out = run(["kc", "--c", 0.2], capsys)
    assert code == 2
    assert "0.163" in out.err


def test_kc_curve(tmp_path):
    code, _ = run(["kc", "--curve", 0.01, 0.15, 50, "--out", tmp_path])
    assert code == 0
    header, rows = read_csv(tmp_path / "kc_curve.csv")
    assert header == ["c", "k"] and len(rows) == 50
    k = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(k) < 0)
    assert manifest(tmp_path)["outputs"][0]["rows"] == 50


def test_kc_curve_stdout(capsys):
    code, out = run(["kc", "--curve", 0.01, 0.15, 3], capsys)
    assert code == 0 and out.out.splitlines()[0] == "c,k" and len(out.out.splitlines()) == 4


# ---- simulate ----------------------------------------------------------------------------

def test_simulate_chain(tmp_path):
    code, _ = run(["simulate", "chain", "--n", 10000, "--c", 0.09017, "--seed", 1, "--out", tmp_path])
    assert code == 0
    header, rows = read_csv(tmp_path / "chains.csv")
    assert "zeta" in header and len(rows) == 10000
    zeta = np.array([float(r[header.index("zeta")]) for r in rows])
    assert np.all(zeta > 0)
    m = manifest(tmp_path)
    assert m["status"] == "ok"
    assert m["params"]["k"] == pytest.approx(0.1, abs=1e-6)
    assert m["outputs"] == [{"file": "chains.csv", "rows": 10000, "sha256": sha256_file(tmp_path / "chains.csv")}]


@pytest.mark.parametrize("kind,extra", [
    ("chain", ["--n", 2000]),
    ("tilted", ["--n", 3]),
    ("path", ["--horizon", 2]),
    ("resurrect", ["--n", 50]),
])
def test_simulate_byte_identical(tmp_path, kind, extra):
    for sub in ("a", "b"):
        assert run(["simulate", kind, "--seed", 7, "--out", tmp_path / sub] + extra)[0] == 0
    ma, mb = manifest(tmp_path / "a"), manifest(tmp_path / "b")
    assert [o["sha256"] for o in ma["outputs"]] == [o["sha256"] for o in mb["outputs"]]
    for o in ma["outputs"]:
        assert (tmp_path / "a" / o["file"]).read_bytes() == (tmp_path / "b" / o["file"]).read_bytes()


def test_simulate_threads_do_not_change_output(tmp_path, monkeypatch):
    assert run(["simulate", "chain", "--n", 40000, "--seed", 3, "--out", tmp_path / "a", "--threads", 1])[0] == 0
    monkeypatch.setenv("LANGEVIN_BOUNCE_THREADS", "2")
    assert run(["simulate", "chain", "--n", 40000, "--seed", 3, "--out", tmp_path / "b"])[0] == 0
    assert manifest(tmp_path / "b")["params"]["threads"] == 2
    assert (tmp_path / "a" / "chains.csv").read_bytes() == (tmp_path / "b" / "chains.csv").read_bytes()


def test_simulate_path_schema(tmp_path):
    assert run(["simulate", "path", "--seed", 1, "--x0", 0.5, "--u0", -1, "--horizon", 3, "--out", tmp_path])[0] == 0
    header, rows = read_csv(tmp_path / "path.csv")
    assert header == ["t", "x", "v", "w"]
    assert float(rows[0][1]) == 0.5 and float(rows[0][2]) == -1.0
    assert read_csv(tmp_path / "bounces.csv")[0] == ["t", "v_in", "v_out"]


def test_simulate_resurrect(tmp_path):
    assert run(["simulate", "resurrect", "--eps", 0.01, "--seed", 1, "--out", tmp_path])[0] == 0
    header, rows = read_csv(tmp_path / "excursions.csv")
    assert header == ["start", "length", "first_bounce_time", "max_speed"]
    assert len(rows) >= 1
    files = {o["file"] for o in manifest(tmp_path)["outputs"]}
    assert files == {"path.csv", "bounces.csv", "excursions.csv"}
    assert set(os.listdir(tmp_path)) == files | {"manifest.json"}


def test_simulate_tilted_schema(tmp_path):
    assert run(["simulate", "tilted", "--n", 2, "--seed", 1, "--max-bounces", 10, "--out", tmp_path])[0] == 0
    header, rows = read_csv(tmp_path / "tilted_chains.csv")
    assert header == ["chain", "bounce", "log_time", "log_speed"] and len(rows) == 22


def test_simulate_requires_seed(capsys, tmp_path):
    code, out = run(["simulate", "chain", "--out", tmp_path], capsys)
    assert code == 2 and "--seed" in out.err


@pytest.mark.parametrize("args", [
    ["--c", 0.5], ["--dt", -1], ["--n", 0], ["--eps", "nan"], ["--threads", 0],
])
def test_simulate_usage_errors(tmp_path, args):
    assert run(["simulate", "chain", "--seed", 1, "--out", tmp_path] + args)[0] == 2


def test_simulate_needs_out():
    assert run(["simulate", "chain", "--seed", 1])[0] == 2


def test_guard_exit_code(tmp_path, monkeypatch):
    from langevin_bounce import skeleton
    monkeypatch.setattr(skeleton, "_MAX_ROUNDS", 0)
    assert run(["simulate", "chain", "--n", 10, "--seed", 1, "--out", tmp_path])[0] == 3
    m = manifest(tmp_path)
    assert m["status"] == "guard" and "SimulationGuardError" in m["error"]


def test_threads_env_invalid(tmp_path, monkeypatch):
    monkeypatch.setenv("LANGEVIN_BOUNCE_THREADS", "zero")
    assert run(["simulate", "chain", "--n", 10, "--seed", 1, "--out", tmp_path])[0] == 2


# ---- overshoot -------------------------------------------------------------------------------

def test_overshoot(tmp_path, capsys):
    code, out = run(["overshoot", "--seed", 0, "--n", 3000, "--table-size", 5000,
                     "--cache", tmp_path / "cache", "--out", tmp_path / "o"], capsys)
    assert code == 0
    summary = json.loads(out.out)
    assert summary["ks_pvalue"] > 0.01
    header, rows = read_csv(tmp_path / "o" / "overshoot.csv")
    assert header == ["source", "value"] and len(rows) == 6000
    assert len(os.listdir(tmp_path / "cache")) == 1


# ---- verify ------------------------------------------------------------------------------------

def test_verify_report_schema(tmp_path, capsys):
    code, out = run(["verify", "--only", "1,2", "--out", tmp_path], capsys)
    assert code == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    assert [c["id"] for c in report["criteria"]] == [1, 2]
    assert report["all_passed"] is True
    assert "[PASS] criterion  1" in out.err


def test_verify_negative_control(capsys):
    code, out = run(["verify", "--only", "3,4", "--inject-k", 0.2], capsys)
    assert code == 1
    report = json.loads(out.out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert report["injected_k"] == 0.2
    assert not any(c["passed"] for c in report["criteria"])


def test_simulate_path_inadmissible_start(tmp_path):
    assert run(["simulate", "path", "--seed", 1, "--x0", 0, "--u0", -1, "--out", tmp_path])[0] == 2
