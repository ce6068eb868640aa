from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from berkgreen import cli

DATA = Path(__file__).resolve().parents[1] / "sample_data"


def run(capsys, *argv: str) -> tuple[int, str, str]:
    rc = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_kernel_value(capsys):
    rc, out, _ = run(capsys, "kernel", "--space", DATA / "segment.json", "--zeta", "v0", "--x", "v1", "--y", "v1")
    assert rc == 0
    assert "value: 2.0" in out.splitlines()


def test_kernel_table_and_base_change(capsys):
    rc, out, _ = run(capsys, "kernel", "--space", DATA / "segment.json", "--zeta", "v0", "--y", "e0:1.5", "--format", "csv")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and {"edge", "offset", "value"} <= set(rows[0])
    rc, out, _ = run(
        capsys, "kernel", "--space", DATA / "circle_tree.json", "--zeta", "c0", "--x", "a1:0.5", "--y", "t1:0.2",
        "--check", "base-change", "--zeta-prime", "b", "--format", "json",
    )
    assert rc == 0
    assert max(v for k, v in json.loads(out).items() if "residual" in k) <= 1e-12


def test_malformed_input_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [\n')
    rc, _, err = run(capsys, "kernel", "--space", bad, "--zeta", "v0", "--x", "v0", "--y", "v0")
    assert rc == 2
    assert f"{bad}:2:1" in err
    rc, _, err = run(capsys, "kernel", "--space", DATA / "segment.json", "--zeta", "nowhere", "--x", "v0", "--y", "v0")
    assert rc == 2 and "error" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["equidist", "--n", "4,zero"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_energy_json(capsys):
    rc, out, _ = run(
        capsys, "energy", "--space", DATA / "circle.json", "--mu", DATA / "haar.json", "--nu", DATA / "haar.json",
        "--format", "json",
    )
    assert rc == 0
    doc = json.loads(out)
    assert list(doc) == ["value", "diagonal", "off_diagonal", "density", "h"]
    assert abs(doc["value"]) <= 1e-9


def test_green_infinite_diagonal_in_json(capsys):
    rc, out, _ = run(
        capsys, "green", "--space", DATA / "circle_tree.json", "--mu", DATA / "mixed_measure.json",
        "--x", "p", "--y", "p", "--format", "json",
    )
    assert rc == 0
    assert json.loads(out)["value"] == "inf"


def test_minimize_report(capsys):
    rc, out, _ = run(capsys, "minimize", "--space", DATA / "circle.json", "--mu", DATA / "haar.json", "--h", "0.1", "--format", "json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["converged"] is True
    assert doc["frostman_deviation"] <= 1e-6


def test_strict_non_convergence(capsys):
    argv = ["minimize", "--space", DATA / "circle.json", "--mu", DATA / "haar.json", "--h", "0.1", "--max-iter", "2"]
    rc, out, _ = run(capsys, *argv)
    assert rc == 0 and "converged: false" in out
    rc, _, err = run(capsys, *argv, "--strict")
    assert rc == 1 and "not converged" in err


def test_capacity_command(capsys):
    rc, out, _ = run(
        capsys, "capacity", "--space", DATA / "segment.json", "--zeta0", "v0", "--zeta", "v0",
        "--region", DATA / "region_tail.json", "--h", "0.05", "--format", "json",
    )
    assert rc == 0
    assert json.loads(out)["value"] == pytest.approx(1.5, abs=1e-9)
    rc, _, err = run(
        capsys, "capacity", "--space", DATA / "segment.json", "--zeta0", "v0", "--zeta", "e0:1.7",
        "--region", DATA / "region_tail.json",
    )
    assert rc == 2


def test_discrepancy_command(capsys):
    rc, out, _ = run(
        capsys, "discrepancy", "--reduction", "multiplicative", "--log-abs-j", "3", "--points", DATA / "points_circle.json",
        "--format", "json",
    )
    assert rc == 0
    assert json.loads(out)["D"] == pytest.approx(3 / (12 * 16), abs=1e-12)


def test_equidist_csv_and_determinism(capsys, tmp_path):
    argv = ["equidist", "--log-abs-j", "2", "--generator", "random_uniform", "--n", "4,8,16", "--seed", "3", "--format", "csv"]
    rc, first, _ = run(capsys, *argv)
    assert rc == 0
    assert first.splitlines()[0] == "n,D,BL,seed,h"
    assert len(first.splitlines()) == 4
    rc, second, _ = run(capsys, *argv, "--threads", "3")
    assert first == second
    out = tmp_path / "trace.csv"
    rc, stdout, _ = run(capsys, *argv, "--out", out)
    assert rc == 0 and stdout == "" and out.read_text() == first


def test_threads_environment_override(capsys, monkeypatch):
    seen = []
    real = cli.equidistribution_experiment

    def spy(*a, **kw):
        seen.append(kw["threads"])
        return real(*a, **kw)

    monkeypatch.setattr(cli, "equidistribution_experiment", spy)
    monkeypatch.setenv("BERKGREEN_THREADS", "3")
    rc, _, _ = run(capsys, "equidist", "--log-abs-j", "2", "--n", "4,8", "--threads", "1")
    assert rc == 0 and seen == [3]
    monkeypatch.setenv("BERKGREEN_THREADS", "lots")
    rc, _, err = run(capsys, "equidist", "--log-abs-j", "2", "--n", "4")
    assert rc == 2 and "BERKGREEN_THREADS" in err


def test_check_command(capsys):
    rc, out, _ = run(capsys, "check", "--space", DATA / "circle_tree.json", "--samples", "20", "--format", "json")
    assert rc == 0
    doc = json.loads(out)
    for key in ("symmetry", "base_change", "laplacian", "retraction"):
        assert doc[key] <= 1e-9


def test_console_script_is_byte_identical():
    argv = [sys.executable, "-m", "berkgreen.cli", "kernel", "--space", str(DATA / "circle.json"), "--zeta", "c0", "--y", "a1:0.4"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and a
