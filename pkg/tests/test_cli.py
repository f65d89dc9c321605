import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

import elliptic_ortho.cli as cli
from elliptic_ortho.curve import from_roots
from elliptic_ortho.exact import ZeroCountError, moments, orthogonal_section, zeros

HALF_CURVE = {"curve": {"roots": [1.5, 1, -2.5]}, "divisor": 1 / 3}
INT_CURVE = {"curve": {"roots": [2, 1, -3]}, "divisor": 1 / 3}


def run(tmp_path, command, config, *extra, name="out"):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    rc = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return rc, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_curve_info(tmp_path, capsys):
    rc, out = run(tmp_path, "curve-info", HALF_CURVE)
    assert rc == 0
    rep = json.loads((out / "curve_info.json").read_text())
    assert abs(rep["tau_im"] - 0.6563) < 5e-4
    assert rep["K_squared_residual"] < 1e-10
    assert max(rep["tyurin"]["even"]["null_vector_residuals"]) < 1e-8
    assert json.loads(capsys.readouterr().out)["tau_im"] == rep["tau_im"]
    man = json.loads((out / "manifest-curve-info.json").read_text())
    assert man["exit_code"] == 0 and "timestamp" in man


def test_curve_info_square_lattice(tmp_path):
    rc, out = run(tmp_path, "curve-info", {"curve": {"tau_im": 1.0, "scale": 2.0}, "divisor": 0.3})
    assert rc == 0
    rep = json.loads((out / "curve_info.json").read_text())
    assert abs(rep["e2"]) < 1e-12 * rep["e1"]
    assert rep["e1"] == pytest.approx(-rep["e3"], rel=1e-12)


@pytest.mark.parametrize("patch, field", [
    ({"divisor": 0.0}, "divisor"),
    ({"divisor": "a"}, "divisor"),
    ({"curve": {"roots": [1, 1, -2]}}, "curve"),
    ({"curve": {"tau_im": -1}}, "curve.tau_im"),
    ({"n_range": [0, 4]}, "n_range"),
    ({"quadrature_n": 100}, "quadrature_n"),
    ({"weight": {"cos": ["x"]}}, "weight.cos"),
    ({"precision": "quad"}, "precision"),
])
def test_config_errors(tmp_path, capsys, patch, field):
    rc, _ = run(tmp_path, "curve-info", {**HALF_CURVE, **patch})
    assert rc == 2
    assert f"'{field}'" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["curve-info", "--config", str(bad)]) == 2


def test_thread_env_validation(monkeypatch):
    monkeypatch.setenv("ELLIPTIC_ORTHO_THREADS", "3")
    assert cli.worker_count() == 3
    monkeypatch.setenv("ELLIPTIC_ORTHO_THREADS", "0")
    assert cli.worker_count() >= 1
    monkeypatch.setenv("ELLIPTIC_ORTHO_THREADS", "-1")
    with pytest.raises(cli.ConfigError):
        cli.worker_count()


def test_ortho_outputs(tmp_path):
    rc, out = run(tmp_path, "ortho", {**HALF_CURVE, "n_range": [2, 8]})
    assert rc == 0
    rows = read_csv(out / "ortho_n06.csv")
    assert rows[0] == ["s", "exact", "asym", "abs_error"]
    assert len(rows) == 257
    data = np.array(rows[1:], dtype=float)
    assert np.allclose(np.abs(data[:, 1] - data[:, 2]), data[:, 3])
    # zeros file reproduces exact.zeros bit for bit
    c = from_roots(1.5, 1, -2.5)
    gz, az = zeros(orthogonal_section(moments(c, 1 / 3, n_max=8), 6), c, 1 / 3)
    zr = [r for r in read_csv(out / "zeros.csv")[1:] if r[0] == "6"]
    assert [float(r[2]) for r in zr if r[1] == "gamma"] == gz
    assert [float(r[2]) for r in zr if r[1] == "alpha"] == [az]
    norms = read_csv(out / "norms.csv")
    assert norms[0] == ["n", "exact", "asym", "ratio"]
    ratio = {int(r[0]): float(r[3]) for r in norms[1:]}
    assert abs(ratio[8] - 1) < 1e-2


def test_ortho_determinism(tmp_path, monkeypatch):
    cfg = {**HALF_CURVE, "n_range": [2, 6], "samples": 64}
    monkeypatch.setenv("ELLIPTIC_ORTHO_THREADS", "4")
    _, a = run(tmp_path, "ortho", cfg, name="a")
    monkeypatch.setenv("ELLIPTIC_ORTHO_THREADS", "1")
    _, b = run(tmp_path, "ortho", cfg, name="b")
    files = sorted(p.name for p in a.iterdir() if not p.name.startswith("manifest"))
    assert files == sorted(p.name for p in b.iterdir() if not p.name.startswith("manifest"))
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_density(tmp_path):
    rc, out = run(tmp_path, "density", {**INT_CURVE, "n_range": [2, 12], "samples": 512})
    assert rc == 0
    rows = read_csv(out / "density.csv")
    assert rows[0] == ["s", "dmu0_ds", "histogram"]
    data = np.array(rows[1:], dtype=float)
    assert abs(data[:, 1].mean() - 1) < 1e-6
    c = from_roots(2, 1, -3)
    assert data[0, 1] == pytest.approx(math.sqrt(c.hat_e[0] - c.hat_e[2]) / math.pi, rel=1e-10)
    summary = json.loads((out / "manifest-density.json").read_text())["summary"]
    assert summary["kolmogorov_distance"] < 0.1


def test_rhp_verify_defaults(tmp_path):
    rc, out = run(tmp_path, "rhp-verify", HALF_CURVE)
    rep = json.loads((out / "rhp_verify.json").read_text())
    failed = [c["name"] for c in rep["certificates"] if not c["pass"]]
    assert rc == 0, failed
    assert rep["all_pass"]
    names = {c["name"] for c in rep["certificates"]}
    assert {"omega0_dual_form", "R_jump_held_out", "scalar_rhp_jump", "tyurin_det_P_odd"} <= names


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise ZeroCountError("forced")

    monkeypatch.setattr(cli, "zeros", broken)
    rc, out = run(tmp_path, "ortho", {**HALF_CURVE, "n_range": [2, 3]})
    assert rc == 3
    assert json.loads((out / "manifest-ortho.json").read_text())["exit_code"] == 3


def test_escalation_exit_code(tmp_path, monkeypatch):
    import elliptic_ortho.exact as ex

    monkeypatch.setattr(ex, "PIVOT_TOL", 0.5)
    rc, _ = run(tmp_path, "ortho", {**HALF_CURVE, "n_range": [2, 4], "allow_escalation": False})
    assert rc == 4


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "elliptic_ortho.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "rhp-verify" in res.stdout
