import json
import subprocess
import sys

import numpy as np
import pytest

from czreg.cli import main
from czreg.signals import load, load_csv


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_generate_szf_and_csv(tmp_path, capsys):
    assert main(["generate", "--kind", "cusp", "--n", "257", "--u", "0.5", "--out", str(tmp_path / "c.szf")]) == 0
    f = load(tmp_path / "c.szf")
    assert f.shape == (257,) and f.meta["params"]["u"] == 0.5
    assert main(["generate", "--kind", "poly", "--coeffs", "1,2", "--n", "5", "--out", str(tmp_path / "p.csv")]) == 0
    np.testing.assert_allclose(load_csv(tmp_path / "p.csv").values, [1.0, 1.5, 2.0, 2.5, 3.0])
    assert "wrote" in capsys.readouterr().out


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CZREG_OUT_DIR", str(tmp_path))
    assert main(["generate", "--kind", "sin", "--n", "65"]) == 0
    assert (tmp_path / "sin.szf").exists()


def test_analyze_report_schema(tmp_path):
    src = tmp_path / "c.szf"
    main(["generate", "--kind", "cusp", "--n", "4097", "--u", "0.6", "--out", str(src)])
    out = tmp_path / "r.json"
    code = main(["analyze", "--in", str(src), "--p", "inf", "--phi", "t^0.6", "--t-degree", "0",
                 "--points=-0.3,0,0.2", "--out", str(out)])
    assert code == 0
    rep = _json(out)
    assert set(rep) == {"tool", "version", "config", "summary", "reports"}
    assert rep["config"]["command"] == "analyze"
    verdicts = {r["point"][0]: r["verdict_t"] for r in rep["reports"]}
    assert verdicts == {-0.3: "pass", 0.0: "fail", 0.2: "pass"}


def test_analyze_fixed_jet_and_default_points(tmp_path):
    src = tmp_path / "c.szf"
    main(["generate", "--kind", "cusp", "--n", "2049", "--out", str(src)])
    out = tmp_path / "r.json"
    assert main(["analyze", "--in", str(src), "--p", "inf", "--phi", "t^0.6", "--policy", "fixed-jet",
                 "--t-degree", "0", "--out", str(out)]) == 0
    rep = _json(out)
    assert rep["summary"]["points"] == len(rep["reports"]) > 10


def test_jet_and_extend_round_trip(tmp_path, capsys):
    src = tmp_path / "s.szf"
    main(["generate", "--kind", "sin", "--n", "4097", "--out", str(src)])
    jets = tmp_path / "j.json"
    assert main(["jet", "--in", str(src), "--points", "0.3:0.7:5", "--eps-max", "0.04",
                 "--eps-levels", "4", "--out", str(jets)]) == 0
    rows = _json(jets)
    assert len(rows) == 5
    for row in rows:
        assert row["coeffs"][0] == pytest.approx(np.sin(row["x"]), abs=1e-4)
        assert row["coeffs"][1] == pytest.approx(np.cos(row["x"]), abs=1e-3)
        assert "epsilons" in row["diagnostics"]
    ext = tmp_path / "e.szf"
    assert main(["extend", "--jets", str(jets), "--phi", "t^1.5", "--n", "513", "--margin", "0.5",
                 "--out", str(ext), "--verify"]) == 0
    text = capsys.readouterr().out
    assert "C_comp = " in text and "C = " in text
    f = load(ext)
    assert f.shape == (513,)
    i = int(np.argmin(np.abs(f.axis(0) - 0.5)))
    assert f.values[i] == pytest.approx(np.sin(0.5), abs=1e-2)


def test_boyd_command(capsys):
    assert main(["boyd", "--phi", "t^0.5 * L2^0.5", "--indices", "--dilation", "0.5", "--band",
                 "--admissible", "2", "1"]) == 0
    out = capsys.readouterr().out
    assert "lower = 0.5" in out and "band n = 0" in out and "admissible(p=2, d=1) = True" in out


def test_experiment_command(tmp_path, capsys):
    out = tmp_path / "x.json"
    assert main(["experiment", "smooth-remark", "--n", "2049", "--points", "5", "--out", str(out)]) == 0
    rep = _json(out)
    assert rep["experiment"]["name"] == "smooth_remark"
    assert (tmp_path / "x.csv").read_text().startswith("series,point,r,rho\n")
    first = out.read_bytes()
    main(["experiment", "smooth-remark", "--n", "2049", "--points", "5", "--out", str(out)])
    assert out.read_bytes() == first


@pytest.mark.parametrize("argv", [
    ["boyd", "--phi", "t^"],
    ["analyze", "--in", "/nonexistent.szf"],
    ["jet", "--in", "/nonexistent.szf", "--x", "0.5"],
    ["analyze", "--in", "{src}", "--p", "0.5"],
    ["analyze", "--in", "{src}", "--points", "a:b"],
    ["extend", "--jets", "/nonexistent.json"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    src = tmp_path / "s.szf"
    main(["generate", "--kind", "sin", "--n", "257", "--out", str(src)])
    argv = [a.replace("{src}", str(src)) for a in argv]
    assert main(argv) == 2
    assert "usage error" in capsys.readouterr().err


def test_malformed_input_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.szf"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert main(["analyze", "--in", str(bad)]) == 2
    assert "offset 0" in capsys.readouterr().err


def test_incompatible_jets_exit_1(tmp_path, capsys):
    jets = tmp_path / "j.json"
    jets.write_text(json.dumps([{"x": 0.0, "coeffs": [0.0]}, {"x": 1e-4, "coeffs": [1.0]}]))
    assert main(["extend", "--jets", str(jets), "--out", str(tmp_path / "e.szf")]) == 1
    assert "CompatibilityError" in capsys.readouterr().err


def test_help_documents_formats():
    proc = subprocess.run([sys.executable, "-m", "czreg.cli", "analyze", "--help"],
                          capture_output=True, text=True, check=True)
    for token in ("SZF1", "uint64", "# szf", "verdict_T", "CZREG_OUT_DIR", "--radii-levels", "exit status"):
        assert token in proc.stdout
    top = subprocess.run(["czreg", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("generate", "analyze", "jet", "extend", "boyd", "experiment"):
        assert cmd in top.stdout


def test_generate_brownian_reload(tmp_path):
    out = tmp_path / "b.szf"
    assert main(["generate", "--kind", "brownian", "--n", "1024", "--seed", "7", "--out", str(out)]) == 0
    from czreg.signals import gen_brownian

    assert load(out) == gen_brownian(1024, seed=7)
