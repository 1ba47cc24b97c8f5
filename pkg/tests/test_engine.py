import warnings

import numpy as np
import pytest

from thermotled import kernels, presets
from thermotled.bioheat import (
    FixedTemperature,
    HeatSourceSet,
    RegionalSource,
    ThermalState,
    assemble_thermal_loads,
    step_temperature,
)
from thermotled.engine import (
    ConfigError,
    InstabilityError,
    Problem,
    Simulation,
    SimulationConfig,
    bench,
    bench_problem,
    load_checkpoint,
    save_checkpoint,
    scaling_slope,
    write_bench_csv,
)
from thermotled.io import sphere_elements
from thermotled.mechanics import MechBCs
from thermotled.mesh import box_mesh


def heated_block(kind="T4", n=3, material=None):
    mesh = box_mesh((0.01, 0.01, 0.01), (n, n, n), kind)
    material = material or presets.liver()
    src = sphere_elements(mesh, (0.005, 0.005, 0.005), 0.003)
    return Problem(
        mesh, material, MechBCs(fixed_nodes=mesh.node_set("zmin")),
        HeatSourceSet([RegionalSource(src, presets.LIVER_SOURCE_POWER)]),
    )


def test_config_validation():
    with pytest.raises(ConfigError, match="sim.dt"):
        SimulationConfig(dt=0.0, duration=1.0)
    with pytest.raises(ConfigError, match="sim.coupling"):
        SimulationConfig(dt=1e-3, duration=1.0, coupling="loose")
    with pytest.raises(ConfigError, match="field"):
        SimulationConfig(dt=1e-3, duration=1.0, fields=("pressure",))
    cfg = SimulationConfig(dt=1e-3, duration=0.1, snapshot_interval=0.02)
    assert cfg.n_steps == 100 and cfg.snapshot_every == 20


def test_unstable_dt_refused_with_limits():
    problem = heated_block()
    with pytest.raises(ConfigError, match=r"exceeds the critical time step \(thermal .* mechanical"):
        Simulation(problem, SimulationConfig(dt=1.0, duration=10.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sim = Simulation(problem, SimulationConfig(dt=1.0, duration=10.0, allow_unstable_dt=True))
    assert sim.warnings and caught


def test_blow_up_reports_instability():
    problem = heated_block()
    cfg = SimulationConfig(dt=0.05, duration=100.0, expansion=True, allow_unstable_dt=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sim = Simulation(problem, cfg)
        with pytest.raises(InstabilityError, match="at step"):
            sim.run()


def test_thermal_only_matches_bioheat_module():
    mesh = box_mesh((0.05, 0.005, 0.005), (10, 1, 1), "T4")
    mat = presets.soft_tissue()
    fixed = [FixedTemperature(mesh.node_set("xmin"), 60.0)]
    problem = Problem(mesh, mat, fixed_temperatures=fixed)
    cfg = SimulationConfig(dt=0.5, duration=50.0, coupling="thermal_only")
    sim = Simulation(problem, cfg)
    state = sim.run().state
    # drive the bioheat module directly with F = I
    F = np.broadcast_to(np.eye(3), (mesh.n_elements, 3, 3)).copy()
    D = np.broadcast_to(0.518 * np.eye(3), (mesh.n_elements, 3, 3)).copy()
    T = np.full(mesh.n_nodes, 37.0)
    T[mesh.node_set("xmin")] = 60.0
    th = ThermalState(T)
    for _ in range(cfg.n_steps):
        loads = assemble_thermal_loads(sim.pre, F, D, th.temperatures, sim.backend)
        th = step_temperature(th, loads, mat.thermal, sim.pre.node_volume, cfg.dt, fixed=fixed,
                              thermal_mass_diag=sim._C_const)
    np.testing.assert_array_equal(state.temperatures, th.temperatures)
    assert not state.disp.any()


def test_mechanical_only_keeps_temperature():
    problem = heated_block()
    sim = Simulation(problem, SimulationConfig(dt=1e-4, duration=0.01, coupling="mechanical_only"))
    out = sim.run()
    assert np.all(out.state.temperatures == 37.0)


def test_sinks_schedule():
    problem = heated_block()
    cfg = SimulationConfig(dt=1e-4, duration=0.0025, snapshot_interval=0.001)
    seen = []
    Simulation(problem, cfg).run(sinks=[lambda s: seen.append(s.step)])
    assert seen == [0, 10, 20, 25]


def test_checkpoint_restart_is_bit_identical(tmp_path):
    problem = heated_block()
    cfg = SimulationConfig(dt=1e-4, duration=0.004, expansion=True, temperature_dependent=True)
    sim = Simulation(problem, cfg)
    straight = sim.run().state
    half = sim.run(n_steps=20).state
    path = tmp_path / "state.npz"
    save_checkpoint(path, half)
    resumed = sim.run(load_checkpoint(path)).state
    assert resumed.step == straight.step == 40
    np.testing.assert_array_equal(resumed.temperatures, straight.temperatures)
    np.testing.assert_array_equal(resumed.disp, straight.disp)
    np.testing.assert_array_equal(resumed.mech.viscous, straight.mech.viscous)
    assert resumed.time == straight.time


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, format=np.array("other"), version=np.array(1))
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(path)


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("kind", ["T4", "H8"])
def test_backends_agree(kind):
    problem = heated_block(kind)
    cfg = SimulationConfig(dt=1e-4, duration=0.02, expansion=True, temperature_dependent=True)
    a = Simulation(problem, cfg, kernels.load_backend("numpy")).run().state
    b = Simulation(problem, cfg, kernels.load_backend("cython")).run().state
    np.testing.assert_array_equal(a.temperatures, b.temperatures)
    np.testing.assert_allclose(a.disp, b.disp, rtol=0, atol=1e-15)
    assert np.abs(a.disp).max() > 0


def test_heat_source_raises_temperature_and_expansion_moves_block():
    problem = heated_block()
    cfg = SimulationConfig(dt=1e-4, duration=0.05, expansion=True)
    summary = Simulation(problem, cfg).run()
    assert summary.peak_temperature > 37.0
    assert summary.disp_max[2] > 0
    assert summary.as_dict()["steps"] == 500


def test_body_force_sags_block():
    mesh = box_mesh((0.01, 0.01, 0.01), (2, 2, 2), "H8")
    problem = Problem(mesh, presets.soft_tissue(), MechBCs(fixed_nodes=mesh.node_set("zmin"), body_force=(0, 0, -1e4)))
    cfg = SimulationConfig(dt=2e-4, duration=1.0, coupling="mechanical_only", damping=50.0)
    out = Simulation(problem, cfg).run()
    assert out.state.disp[mesh.node_set("zmax"), 2].max() < 0


def test_bench_rows(tmp_path):
    meshes = [box_mesh((0.02,) * 3, (n,) * 3, "T4") for n in (2, 3)]
    rows = bench(meshes, presets.liver(), steps=2, warmup=1)
    assert len(rows) == 6
    write_bench_csv(rows, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "kind,elements,nodes,mode,median_s,iqr_s"
    assert np.isfinite(scaling_slope(rows, "TherMechTI"))
    assert bench_problem(meshes[0], presets.liver()).sources.regional
