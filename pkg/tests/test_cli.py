import csv
import json

import numpy as np
import pytest

from thermotled import cli, verify
from thermotled.io import read_snapshot
from thermotled.mesh import dump_mesh

from meshgen import helix_mesh

CONFIG = """
[mesh]
box = 0.01, 0.01, 0.01
divisions = 3, 3, 3
kind = {kind}

[material]
mu = 1190.476
kappa = 19444.444

[thermal]
density = 1060
specific_heat = 3600@37, 4300@90
conductivity = 0.53@37, 0.75@90
perfusion_rate = 26.6
blood_specific_heat = 3617

[expansion]
alpha = 1e-4

[sources]
core = power=9705360 center=0.005,0.005,0.005 diameter=0.006

[bcs]
fixed = zmin

[sim]
dt = 1e-4
duration = 0.005
expansion = true
temperature_dependent = true

[output]
snapshot_interval = 0.002
probes = 1, 32
fields = temperature, displacement, det_f, max_principal_stress
ablation_thresholds = 37.5
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "block.cfg"
    path.write_text(CONFIG.format(kind="T4"))
    return path


def test_run_writes_outputs(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(config), "--out", str(out), "--workers", "1"]) == 0
    snaps = sorted((out / "snapshots").glob("*.vtk"))
    assert [p.name for p in snaps] == [
        "snapshot_000000.vtk", "snapshot_000020.vtk", "snapshot_000040.vtk", "snapshot_000050.vtk"
    ]
    last = read_snapshot(snaps[-1])
    assert last["step"] == 50 and "det_f" in last and "max_principal_stress" in last
    rows = list(csv.reader(open(out / "probes.csv")))
    assert rows[0] == ["time", "node_id", "T", "ux", "uy", "uz"]
    assert len(rows) == 1 + 2 * 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 50 and summary["peak_temperature"] > 37.0
    assert "peak temperature" in capsys.readouterr().out


def test_run_json(config, tmp_path, capsys):
    assert cli.main(["run", "--config", str(config), "--out", str(tmp_path / "o"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["steps"] == 50


def test_check_reports_sizes(config, capsys):
    assert cli.main(["check", "--config", str(config), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["nodes"] == 64 and data["elements"] == 162 and data["dofs"] == 256
    assert data["heat_source_elements"]["core"] > 0
    assert data["critical_dt_mechanical"] > 1e-4


def test_check_helix_mesh_dofs(tmp_path, capsys):
    (tmp_path / "helix.msh").write_text(dump_mesh(helix_mesh()))
    text = CONFIG.format(kind="T4").replace(
        "box = 0.01, 0.01, 0.01\ndivisions = 3, 3, 3\nkind = T4", "file = helix.msh"
    )
    text = text.replace("core = power=9705360 center=0.005,0.005,0.005 diameter=0.006",
                        "core = power=9705360 elements=all")
    text = text.replace("fixed = zmin", "fixed = start").replace("probes = 1, 32", "probes = 1")
    text = text.replace("dt = 1e-4", "dt = 1e-6")
    cfg = tmp_path / "helix.cfg"
    cfg.write_text(text)
    assert cli.main(["check", "--config", str(cfg), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["nodes"] == 4489
    assert data["dofs"] == 17956


def test_unstable_dt_exit_code(config, capsys):
    assert cli.main(["check", "--config", str(config), "--override", "sim.dt=0.01", "--override", "sim.duration=1"]) == 1
    err = capsys.readouterr().err
    assert "critical time step" in err and "mechanical" in err


def test_config_error_exit_code(config, capsys):
    assert cli.main(["run", "--config", str(config), "--override", "sim.bogus=1"]) == 1
    assert "unknown config key sim.bogus" in capsys.readouterr().err
    assert cli.main(["check", "--config", str(config) + ".missing"]) == 1


def test_instability_exit_code(config, tmp_path, capsys):
    args = ["run", "--config", str(config), "--out", str(tmp_path / "o"),
            "--override", "sim.dt=0.05", "--override", "sim.duration=50",
            "--override", "sim.allow_unstable_dt=true"]
    with pytest.warns(RuntimeWarning):
        assert cli.main(args) == 2
    assert "at step" in capsys.readouterr().err


def test_verify_list_and_case(tmp_path, capsys):
    assert cli.main(["verify", "--list"]) == 0
    assert capsys.readouterr().out.split() == verify.case_names()
    assert cli.main(["verify", "--case", "perfusion_decay", "--out", str(tmp_path)]) == 0
    assert "PASS perfusion_decay" in capsys.readouterr().out
    assert (tmp_path / "verify.csv").read_text().startswith("case,metric,value,tolerance,pass")
    assert cli.main(["verify", "--case", "missing"]) == 1


def test_verify_failure_exit_code(monkeypatch, capsys):
    failing = verify.OracleCase("broken", "always fails", 1.0, 1, 1.0,
                                lambda w, b: ([verify.Metric("m", 2.0, 1.0)], 0))
    monkeypatch.setitem(verify.CASES, "broken", lambda: failing)
    assert cli.main(["verify", "--case", "broken", "--json"]) == 3
    data = json.loads(capsys.readouterr().out)
    assert data[0]["passed"] is False


def test_bench_small_ladder(config, tmp_path, capsys):
    args = ["bench", "--config", str(config), "--out", str(tmp_path), "--min-elements", "48",
            "--max-elements", "3000", "--points", "5", "--steps", "2", "--mesh-kind", "h8"]
    assert cli.main(args) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0] == "kind,elements,nodes,mode,median_s,iqr_s"
    assert len(lines) == 1 + 5 * 3
    assert "log-log slope TherMechTI" in capsys.readouterr().out


def test_ladder_sizes():
    meshes = cli.ladder("T4", 1000, 64000, 5)
    counts = [m.n_elements for m in meshes]
    assert counts == sorted(counts) and len(counts) == 5
    assert counts[0] >= 750 and counts[-1] <= 70000
    with pytest.raises(Exception, match="too narrow"):
        cli.ladder("H8", 8, 9, 5)


def test_workers_must_be_positive(config, capsys):
    assert cli.main(["check", "--config", str(config), "--workers", "0"]) == 1


def test_h8_run(tmp_path):
    path = tmp_path / "h8.cfg"
    path.write_text(CONFIG.format(kind="H8"))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    last = read_snapshot(tmp_path / "o" / "snapshots" / "snapshot_000050.vtk")
    assert last["cell_types"].tolist() == [12] * 27
    assert np.isfinite(last["displacement"]).all()


def test_checkpoint_and_restart(config, tmp_path, capsys):
    full, first, rest = (tmp_path / n for n in ("full", "first", "rest"))
    assert cli.main(["run", "--config", str(config), "--out", str(full)]) == 0
    ckpt = tmp_path / "half.npz"
    assert cli.main(["run", "--config", str(config), "--out", str(first),
                     "--override", "sim.duration=0.0025", "--checkpoint", str(ckpt)]) == 0
    assert cli.main(["run", "--config", str(config), "--out", str(rest), "--restart", str(ckpt)]) == 0
    a = (full / "snapshots" / "snapshot_000050.vtk").read_bytes()
    assert (rest / "snapshots" / "snapshot_000050.vtk").read_bytes() == a
    capsys.readouterr()
    bad = tmp_path / "bad.npz"
    np.savez(bad, x=np.zeros(1))
    assert cli.main(["run", "--config", str(config), "--out", str(rest), "--restart", str(bad)]) == 1
    assert "cannot restart" in capsys.readouterr().err
