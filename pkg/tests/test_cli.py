from __future__ import annotations

import json
import subprocess
import sys

import pytest

from csa import catalog
from csa.cli import main


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_threshold_irsa(tmp_path, capsys):
    d = catalog.repetition(catalog.IRSA["1/3"])
    cfg = write(tmp_path, "d.json", {"entries": [e.to_json() for e in d.entries]})
    code, out, _ = run(capsys, "threshold", "--config", cfg)
    assert code == 0 and json.loads(out)["G_star"] == pytest.approx(0.8792, abs=1e-3)


def test_threshold_single_repetition(tmp_path, capsys):
    cfg = write(tmp_path, "d.json", [{"type": "rep", "n": 2, "p": 1.0}])
    code, out, _ = run(capsys, "threshold", "--config", cfg, "--tolerance", "1e-5")
    rec = json.loads(out)
    assert code == 0 and rec["G_star"] == pytest.approx(0.5, abs=1e-3)
    assert rec["tolerance"] == 1e-5 and rec["probes"]


def test_malformed_json_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", "{not json")
    code, out, err = run(capsys, "threshold", "--config", cfg)
    assert code == 2 and out == "" and "malformed" in err


def test_missing_file_and_bad_distribution(tmp_path, capsys):
    assert run(capsys, "threshold", "--config", str(tmp_path / "nope.json"))[0] == 2
    cfg = write(tmp_path, "d.json", [{"type": "rep", "n": 2, "p": 0.4}])
    assert run(capsys, "stability", "--config", cfg)[0] == 2


def test_bound_grid(capsys):
    code, out, _ = run(capsys, "bound", "--rates", "1/3,2/5,1/2,3/5,1")
    lines = out.splitlines()
    assert code == 0 and lines[0].startswith("# config_hash=") and lines[1] == "R,G_bound"
    vals = [float(l.split(",")[1]) for l in lines[2:]]
    for v, e in zip(vals, [0.9405, 0.8926, 0.7968, 0.6758, 0.0]):
        assert v == pytest.approx(e, abs=1e-4)


def test_bound_row_error(capsys):
    code, out, err = run(capsys, "bound", "--rates", "0.5,1.2")
    assert code != 0 and "1.2" in err and "0.5," in out


def test_exit_chart_and_reproducibility(tmp_path, capsys):
    d = catalog.specific_k2("1/2")
    cfg = write(tmp_path, "d.json", [e.to_json() for e in d.entries])
    outs = []
    for sub in ("a", "b"):
        code, _, _ = run(capsys, "exit-chart", "--config", cfg, "--load", "0.6",
                         "--samples", "51", "--out", str(tmp_path / sub))
        assert code == 0
        outs.append((tmp_path / sub / "exit_chart.csv").read_text())
        assert (tmp_path / sub / "exit-chart.meta.json").exists()
    assert outs[0] == outs[1]
    lines = outs[0].splitlines()
    assert lines[0].startswith("# config_hash=") and lines[1] == "p,f_b,f_s_inv"
    areas = json.loads((tmp_path / "a" / "exit_chart.json").read_text())
    assert areas["area_b"] == pytest.approx(0.5, abs=1e-4)


def test_stability(tmp_path, capsys):
    cfg = write(tmp_path, "d.json", [{"type": "explicit", "G": "1100,0111", "p": 1.0}])
    code, out, _ = run(capsys, "stability", "--config", cfg)
    assert code == 0 and json.loads(out)["stability_bound"] == pytest.approx(1.0)


def test_simulate_reproducible(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {
        "M": 40, "distribution": [{"type": "explicit", "G": "110,011", "p": 1.0}],
        "loads": [0.3], "frames_per_point": 30, "decoder": "both", "seed": 5,
    })
    texts = []
    for sub, workers in (("a", "1"), ("b", "2")):
        assert run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / sub),
                   "--workers", workers)[0] == 0
        texts.append((tmp_path / sub / "campaign.csv").read_text()
                     + (tmp_path / sub / "campaign.json").read_text())
    assert texts[0] == texts[1]


def test_optimize(tmp_path, capsys):
    cfg = write(tmp_path, "p.json", {
        "candidates": [{"type": "rep", "n": n} for n in range(2, 6)],
        "rate": "5/11", "generations": 20,
    })
    code, _, _ = run(capsys, "optimize", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "1")
    assert code == 0
    design = json.loads((tmp_path / "o" / "design.json").read_text())
    assert design["threshold"] >= 0.624
    assert (tmp_path / "o" / "trajectory.csv").read_text().startswith("# config_hash=")


def test_ensemble(capsys):
    code, out, _ = run(capsys, "ensemble", "--n", "4", "--k", "2")
    assert code == 0 and json.loads(out)["b2"] == pytest.approx(4 / 3, abs=1e-5)
    assert run(capsys, "ensemble", "--n", "18", "--k", "3")[0] == 2
    code, out, _ = run(capsys, "ensemble", "--n", "12", "--k", "2", "--samples", "2000", "--seed", "3")
    assert code == 0 and json.loads(out)["exact"] is False


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "csa.cli", "bound", "--rates", "0.5"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "0.5,0.796812" in r.stdout
