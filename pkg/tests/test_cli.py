import csv
import filecmp
import subprocess
import sys

import numpy as np
import pytest

from gaspipe_dse import cli
from gaspipe_dse.network import builtin_benchmark, serialize_network
from gaspipe_dse.simulator import bundled_scenario, parse_scenario, serialize_scenario


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_outputs(tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 0
    truth = _rows(tmp_path / "truth.csv")
    meas = _rows(tmp_path / "measurements.csv")
    assert len(truth) == len(meas) == 97
    assert len(truth[0]) == len(meas[0]) == 61
    assert truth[0][:2] == ["t_s", "p_node1_true"] and truth[0][-1] == "m_node30_true"
    assert meas[0][31] == "m_node1_meas"
    assert [r[0] for r in truth] == [r[0] for r in meas]
    assert float(truth[1][1]) == pytest.approx(27.8, rel=1e-12)
    echo = parse_scenario((tmp_path / "scenario_echo.scn").read_text())
    assert echo == bundled_scenario("normal")


def test_seed_override_is_echoed(tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path), "--seed", "99"]) == 0
    assert parse_scenario((tmp_path / "scenario_echo.scn").read_text()).rng_seed == 99


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["simulate", "--out", str(d), "--seed", "5"]) == 0
    for name in ("truth.csv", "measurements.csv", "scenario_echo.scn"):
        assert filecmp.cmp(a / name, b / name, shallow=False)


def test_estimate_and_evaluate(tmp_path):
    out = str(tmp_path)
    assert cli.main(["estimate", "--out", out]) == 0  # simulates in-run
    for name in ("estimate_kf.csv", "estimate_rkf.csv", "mu_trace.csv"):
        rows = _rows(tmp_path / name)
        assert len(rows) == 97 and len(rows[0]) == 61
    assert _rows(tmp_path / "estimate_rkf.csv")[0][1] == "p_node1_rkf"
    assert _rows(tmp_path / "mu_trace.csv")[0][-1] == "m_node30_mu"
    assert cli.main(["evaluate", "--out", out]) == 0
    report = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert len(report) == 30
    junctions = {3, 4, 5, 6, 7, 8, 18, 23, 28}
    for row in report:
        node = int(row["node"])
        for key in ("p_eps_kf", "p_eps_rkf", "m_eps_kf", "m_eps_rkf"):
            if row[key] == "":
                assert node in (1, 2) and key.startswith("p")
                continue
            v = float(row[key])
            if key.startswith("m") and node in junctions:
                assert 0.9 <= v <= 1.0
            else:
                assert v < 1.0
    summary = (tmp_path / "summary.txt").read_text()
    assert "majority" in summary
    first = (tmp_path / "report.csv").read_bytes()
    assert cli.main(["evaluate", "--out", out]) == 0
    assert (tmp_path / "report.csv").read_bytes() == first


def test_classic_variant_omits_mu(tmp_path):
    assert cli.main(["estimate", "--out", str(tmp_path), "--variant", "kf"]) == 0
    assert (tmp_path / "estimate_kf.csv").exists()
    assert not (tmp_path / "estimate_rkf.csv").exists()
    assert not (tmp_path / "mu_trace.csv").exists()
    assert cli.main(["evaluate", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert rows[5]["m_eps_rkf"] == "" and rows[5]["m_eps_kf"] != ""


def test_mu_spikes_at_bad_data(tmp_path):
    scn = tmp_path / "bad.scn"
    scn.write_text(serialize_scenario(bundled_scenario("bad_data")))
    assert cli.main(["estimate", "--out", str(tmp_path), "--scenario", str(scn)]) == 0
    rows = _rows(tmp_path / "mu_trace.csv")
    col = rows[0].index("p_node30_mu")
    mu = np.array([float(r[col]) for r in rows[1:]])
    spikes = [20, 21, 22, 53, 54, 55]
    assert np.all(mu[np.array(spikes) - 1] > 10 * np.median(mu))


def test_dimension_mismatch(tmp_path, capsys):
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 0
    path = tmp_path / "measurements.csv"
    rows = _rows(path)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([r[:-1] for r in rows])
    assert cli.main(["estimate", "--out", str(tmp_path)]) == 1
    assert "expected 60" in capsys.readouterr().err


def test_evaluate_missing_inputs(tmp_path, capsys):
    assert cli.main(["evaluate", "--out", str(tmp_path)]) == 1
    assert "missing input" in capsys.readouterr().err


def test_config_errors(tmp_path, capsys):
    scn = tmp_path / "x.scn"
    scn.write_text(serialize_scenario(bundled_scenario("normal")).replace("86400.0", "1000.0"))
    assert cli.main(["simulate", "--out", str(tmp_path), "--scenario", str(scn)]) == 1
    assert "multiple" in capsys.readouterr().err
    net = tmp_path / "x.net"
    net.write_text(serialize_network(builtin_benchmark()).replace("\n2 7 ", "\n7 2 "))
    assert cli.main(["simulate", "--out", str(tmp_path), "--network", str(net)]) == 1
    assert "x.net" in capsys.readouterr().err
    assert cli.main(["simulate", "--out", str(tmp_path), "--network", str(tmp_path / "no")]) == 1
    assert cli.main(["estimate", "--out", str(tmp_path), "--mw", "0"]) == 1


def test_parse_errors_name_file_and_line(tmp_path, capsys):
    scn = tmp_path / "y.scn"
    scn.write_text("[time]\n900 86400 1\n[loads]\n3 zero 1\n")
    assert cli.main(["simulate", "--out", str(tmp_path), "--scenario", str(scn)]) == 1
    err = capsys.readouterr().err
    assert "y.scn" in err and "line 4" in err


def test_usage_errors():
    for argv in ([], ["frobnicate"], ["simulate", "--variant", "ukf"], ["demo", "--seed", "-1"]):
        with pytest.raises(SystemExit) as info:
            cli.main(argv)
        assert info.value.code == 1


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from gaspipe_dse import transient

    def boom(*a, **k):
        raise transient.SingularModelError("assembled system is singular")

    monkeypatch.setattr("gaspipe_dse.simulator.assemble", boom)
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate"]) == 0
    assert (tmp_path / "env" / "truth.csv").exists()


def test_demo_tree(tmp_path):
    assert cli.main(["demo", "--out", str(tmp_path)]) == 0
    for name in ("normal", "bad_data", "bias"):
        d = tmp_path / name
        for f in ("truth.csv", "measurements.csv", "estimate_kf.csv", "estimate_rkf.csv",
                  "mu_trace.csv", "report.csv", "summary.txt", "scenario_echo.scn"):
            assert (d / f).exists(), (name, f)
    summary = (tmp_path / "summary.txt").read_text()
    assert "== bad_data ==" in summary and "bad_data max |err| p_node30" in summary


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gaspipe_dse.cli", "simulate", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
