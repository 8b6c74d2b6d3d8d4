"""Command-line interface: subcommands, report format and exit codes."""
import json
import re
import subprocess
import sys

import pytest

from elastowave import cli
from elastowave import config as cf
from elastowave import sbp


def report(capsys):
    text = capsys.readouterr().out
    return dict(re.findall(r"^(\S+) = (.*)$", text, flags=re.M))


def test_simulate_zero_duration_writes_manifest_only(tmp_path, capsys):
    rc = cli.main(["simulate", str(cf.shipped_config("wave1d_interface")), "--output", str(tmp_path),
                   "--duration", "0"])
    assert rc == 0
    rep = report(capsys)
    assert rep["STEPS"] == "0"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n_steps"] == 0 and manifest["lambda_max"] > 0
    assert manifest["config_hash"] == cf.parse_config(cf.shipped_config("wave1d_interface")).hash()
    assert sorted(p.name for p in tmp_path.iterdir() if p.suffix != ".json") == sorted(
        manifest["traces"]) and all((tmp_path / f).stat().st_size > 0 for f in manifest["traces"])


def test_wave1d_writes_traces(tmp_path, capsys):
    rc = cli.main(["wave1d", "--config", str(cf.shipped_config("wave1d_interface")), "--output", str(tmp_path),
                   "--duration", "0.1"])
    assert rc == 0
    rep = report(capsys)
    assert int(rep["STEPS"]) > 0 and rep["TRACES"] == "2"
    assert (tmp_path / "reflected.csv").read_text().startswith("t,u1\n")


def test_wave1d_rejects_2d_config(capsys):
    assert cli.main(["wave1d", "--config", str(cf.shipped_config("lamb")), "--duration", "0"]) == 1


def test_verify_operators_pass(capsys):
    rc = cli.main(["verify-operators", "--orders", "4", "6", "--nodes", "41", "--gll", "5"])
    assert rc == 0
    rep = report(capsys)
    assert rep["STATUS"] == "PASS"
    assert rep["IDENTITY_RESIDUAL_EXACT[shifted_p4]"] == "0"
    assert int(rep["INTERIOR_ORDER[shifted_p6]"]) >= 6
    assert int(rep["CLOSURE_ORDER[symmetric_p4]"]) >= 2


def test_derive_operators_emit(tmp_path, capsys):
    path = tmp_path / "p4.txt"
    assert cli.main(["derive-operators", "--order", "4", "--emit", str(path)]) == 0
    rep = report(capsys)
    assert rep["IDENTITY_RESIDUAL"] == "0" and rep["ACCURACY_RESIDUAL"] == "0"
    assert sbp.parse_catalog(path.read_text()).same_coefficients(sbp.derive_closure(4, "shifted"))


def test_convergence_periodic_manufactured(capsys):
    rc = cli.main(["convergence", str(cf.shipped_config("wave1d_periodic")), "--levels", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    orders = [float(v) for v in re.findall(r"^ORDER\S* = (\S+)", out, flags=re.M)]
    assert orders and all(abs(o - 4) < 0.3 for o in orders)


def test_verify_rayleigh(capsys):
    assert cli.main(["verify", "rayleigh"]) == 0
    rep = report(capsys)
    assert float(rep["RAYLEIGH_SPEED"]) == pytest.approx(1698.6, abs=0.1)


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scheme]\norder = 5\n")
    assert cli.main(["simulate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "[[block]]" in err and "order" in err


def test_missing_config_exit_code(capsys):
    assert cli.main(["simulate", "/nonexistent.toml"]) == 1


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "elastowave.cli", "verify", "rayleigh", "--vp", "2", "--vs", "1"],
                         capture_output=True, text=True, check=True).stdout
    assert "RAYLEIGH_OVER_VS" in out


def test_verify_gll_quadrature(capsys):
    assert cli.main(["verify", "gll"]) == 0
    rep = report(capsys)
    errs = {k: float(v) for k, v in rep.items() if k.startswith("GLL_QUADRATURE_ERROR")}
    assert len(errs) == 10 and max(errs.values()) < 1e-12


def test_verify_impedance(capsys):
    assert cli.main(["verify", "impedance"]) == 0
    rep = report(capsys)
    assert float(rep["ERROR"]) < 1e-3
    assert float(rep["R_EXACT"]) == pytest.approx(-0.6) and float(rep["T_EXACT"]) == pytest.approx(0.4)
