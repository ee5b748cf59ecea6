import io
import json
import shutil
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from minority_sbm.cli import main
from minority_sbm.sweep import SweepSpec, run_grid


def run(*argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


def test_theory_resolvable_point():
    code, text = run("theory", "--qs", 2, "--qb", 2, "--rho", 0.44, "--delta", 0.0019,
                     "--n", 6000, "--d", 5)
    assert code == 0
    assert "phase=resolvable" in text.lower()
    assert "expected_q=4" in text
    assert "threshold lambda4" in text


def test_theory_zero_delta():
    code, text = run("theory", "--qs", 2, "--qb", 2, "--rho", 0.3, "--delta", 0)
    assert code == 0
    assert "SNR=0\n" in text
    assert "phase=undetectable" in text.lower()


def test_theory_infeasible(capsys):
    code, _ = run("theory", "--qs", 1, "--qb", 1, "--rho", 0.6, "--delta", 0.001)
    assert code == 2
    assert "rho" in capsys.readouterr().err
    code, _ = run("theory", "--qs", 1, "--qb", 1, "--rho", 0.3, "--delta", 0.5)
    assert code == 2
    assert "bound" in capsys.readouterr().err


def test_theory_csv(tmp_path):
    out = tmp_path / "curves.csv"
    code, _ = run("theory", "--qs", 1, "--qb", 2, "--rho", 0.3, "--delta", 0.0014, "--csv", out)
    assert code == 0
    assert out.read_text().splitlines()[0] == "curve,delta,rho"


def test_usage_errors():
    assert run()[0] == 1
    assert run("theory", "--qs", "x")[0] == 1
    assert run("theory", "--qs", 2)[0] == 1  # missing --rho/--delta
    assert run("frobnicate")[0] == 1


def test_generate_detect_round_trip(tmp_path):
    prefix = tmp_path / "g"
    code, _ = run("generate", "--n", 2000, "--qs", 1, "--qb", 1, "--rho", 0.45,
                  "--delta", 0.011, "--d", 12, "--seed", 4, "--out", prefix)
    assert code == 0
    side = json.loads((tmp_path / "g.json").read_text())
    assert side["n"] == 2000 and side["seed"] == 4 and side["model"]["q_s"] == 1
    report = tmp_path / "r.json"
    labels = tmp_path / "labels.txt"
    code, text = run("detect", "--edges", f"{prefix}.edges", "--sidecar", f"{prefix}.json",
                     "--json", report, "--labels-out", labels)
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["q"] == 2 and doc["ami"] >= 0.95
    assert "confusion" in doc and "AMI=" in text and "partition=" in text
    assert len(labels.read_text().split()) == 2000


def test_detect_exit_codes(tmp_path):
    good = tmp_path / "g.edges"
    good.write_text("0 1\n1 2\n2 0\n")
    assert run("detect", "--edges", tmp_path / "missing.edges")[0] == 3
    bad = tmp_path / "bad.edges"
    bad.write_text("0 1\nzero one\n")
    assert run("detect", "--edges", bad)[0] == 5
    assert run("detect", "--edges", good, "--sidecar", tmp_path / "nope.json")[0] == 3
    side = tmp_path / "s.json"
    side.write_text(json.dumps({"n": 2, "labels": [0, 1]}))
    assert run("detect", "--edges", good, "--sidecar", side)[0] == 6
    assert run("detect")[0] == 1


def test_detect_solver_failure(tmp_path, monkeypatch):
    from minority_sbm import sweep
    from minority_sbm.errors import SolverError

    def boom(*a, **k):
        raise SolverError("no convergence", 1.0)

    monkeypatch.setattr(sweep, "detect", boom)
    edges = tmp_path / "g.edges"
    edges.write_text("0 1\n")
    assert run("detect", "--edges", edges)[0] == 4


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('qs = 2\nqb = 2\nrho = 0.44\ndelta = 0.0019\n')
    code, text = run("theory", "--config", cfg)
    assert code == 0 and "expected_q=4" in text
    code, text = run("theory", "--config", cfg, "--delta", 0)
    assert code == 0 and "expected_q=1" in text
    cfg.write_text("bogus = 1\n")
    assert run("theory", "--config", cfg)[0] == 1
    cfg.write_text("qs = \n")
    assert run("theory", "--config", cfg)[0] == 5


def _small_sweep(tmp_path, *extra):
    out = tmp_path / "sweep"
    code, text = run("sweep", "--n", 400, "--qs", 1, "--qb", 1, "--d", 10,
                     "--rho-min", 0.3, "--rho-max", 0.3, "--rho-steps", 1,
                     "--delta-min", 0.03, "--delta-max", 0.03, "--delta-steps", 1,
                     "--reps", 2, "--seed", 5, "--threads", 1, "--out", out, *extra)
    assert code == 0, text
    return out


def test_sweep_manifest_reconstructs_run(tmp_path):
    out = _small_sweep(tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 5
    spec = SweepSpec.from_dict(manifest["spec"])
    again = tmp_path / "again"
    run_grid(spec, again)
    assert (again / "results.csv").read_bytes() == (out / "results.csv").read_bytes()


def test_sweep_preset_override():
    from minority_sbm.cli import _sweep_spec, parse_args
    args = parse_args(["sweep", "--preset", "fig5", "--n", "1500", "--reps", "2", "--out", "x"])
    spec = _sweep_spec(args)
    assert spec.n == 1500 and spec.replicates == 2
    assert spec.deltas[0] * 1500 == pytest.approx(0.5)
    assert spec.probes[0][1] * 1500 == pytest.approx(0.0019 * 6000)


def test_plot_one_cell_svg(tmp_path):
    out = _small_sweep(tmp_path)
    svg = tmp_path / "a.svg"
    assert run("plot", "--results", out, "--out", svg)[0] == 0
    root = ET.fromstring(svg.read_text())
    assert root.tag.endswith("svg")
    groups = {e.get("id"): e for e in root.iter() if e.get("id")}
    assert len([e for e in groups["cells"] if e.tag.endswith("rect")]) == 1
    assert "legend" in groups and len(list(groups["legend"])) > 0
    svg2 = tmp_path / "b.svg"
    run("plot", "--results", out, "--out", svg2)
    assert svg.read_bytes() == svg2.read_bytes()
    ami_svg = tmp_path / "c.svg"
    assert run("plot", "--results", out, "--value", "mean_ami", "--out", ami_svg)[0] == 0


def test_plot_errors(tmp_path):
    assert run("plot", "--results", tmp_path / "none", "--out", tmp_path / "x.svg")[0] == 3
    bad = tmp_path / "e.json"
    bad.write_text("{}")
    assert run("plot", "--elbow", bad, "--out", tmp_path / "x.svg")[0] == 5


def test_plot_elbow(tmp_path):
    trace = {"diagnostics": {"trace": {"q": [1, 2, 3, 4], "f_min": [-3.0, -3.4, -3.5, -3.5],
                                       "q_star": 3}}}
    src = tmp_path / "d.json"
    src.write_text(json.dumps(trace))
    svg = tmp_path / "e.svg"
    assert run("plot", "--elbow", src, "--out", svg)[0] == 0
    ET.fromstring(svg.read_text())


def test_console_script():
    exe = shutil.which("minority-sbm")
    cmd = [exe] if exe else [sys.executable, "-m", "minority_sbm.cli"]
    proc = subprocess.run(cmd + ["theory", "--qs", "1", "--qb", "1", "--rho", "0.3",
                                 "--delta", "0.001"], capture_output=True, text=True)
    assert proc.returncode == 0 and "phase=" in proc.stdout
    proc = subprocess.run(cmd + ["theory", "--rho", "0.9", "--delta", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2


@pytest.mark.slow
def test_detect_bp_minority_elbow_point(tmp_path):
    prefix = tmp_path / "a"
    assert run("generate", "--n", 6000, "--qs", 2, "--qb", 3, "--rho", 0.24, "--delta", 0.0022,
               "--scenario", "consistent_degree", "--seed", 1, "--out", prefix)[0] == 0
    report = tmp_path / "r.json"
    code, text = run("detect", "--edges", f"{prefix}.edges", "--sidecar", f"{prefix}.json",
                     "--method", "bp", "--order", "mfe", "--restarts", 2, "--json", report)
    assert code == 0
    assert json.loads(report.read_text())["q"] == 4
