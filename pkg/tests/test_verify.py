import math

import numpy as np
import pytest

from thermotled import verify
from thermotled.engine import Simulation, SimulationConfig

DIFFUSIVITY = 0.518 / (1060.0 * 3700.0)


def test_slab_series_limits():
    x = np.linspace(0, 0.05, 201)[1:-1]
    # the uniform start is a step against the hot end: the series converges in L2
    errs = [
        np.linalg.norm(verify.slab_series(x, 0.0, 0.05, 37.0, 60.0, 37.0, DIFFUSIVITY, n) - 37.0)
        for n in (50, 200, 800)
    ]
    assert errs[0] > errs[1] > errs[2]
    late = verify.slab_series(x, 1e7, 0.05, 37.0, 60.0, 37.0, DIFFUSIVITY)
    np.testing.assert_allclose(late, 60.0 - 23.0 * x / 0.05, atol=1e-9)
    t_check = 0.1 * 0.05**2 / DIFFUSIVITY
    assert t_check == pytest.approx(1892.857142857, rel=1e-10)
    a = verify.slab_series(x, t_check, 0.05, 37.0, 60.0, 37.0, DIFFUSIVITY, 50)
    b = verify.slab_series(x, t_check, 0.05, 37.0, 60.0, 37.0, DIFFUSIVITY, 400)
    assert np.abs(a - b).max() < 1e-12


def test_perfusion_closed_form():
    assert verify.perfusion_time_constant() == pytest.approx(39.6623297253, rel=1e-10)
    assert verify.perfusion_solution(5.0, 37.0, 37.0, 26.6, 3617, 1060, 3600) == 37.0
    assert verify.perfusion_time_constant(w_b=13.3) == pytest.approx(2 * verify.perfusion_time_constant())


def test_fit_time_constant_recovers_exponential():
    t = np.linspace(0, 40, 50)
    assert verify.fit_time_constant(t, 37 + 10 * np.exp(-t / 12.5), 37.0) == pytest.approx(12.5)


def test_relaxation_oracle_values():
    assert verify.relaxation_oracle(0.0, [0.5], [0.58]) == pytest.approx(1.0)
    assert verify.relaxation_oracle(2.9, [0.5], [0.58]) == pytest.approx(0.5033689735, rel=1e-9)


@pytest.mark.parametrize("name", verify.case_names())
def test_case_passes_within_budget(name):
    case = verify.CASES[name]()
    assert case.tolerance > 0
    result = case.run()
    assert result.passed, [(m.name, m.value, m.tolerance) for m in result.metrics]
    assert result.steps <= case.max_steps
    assert result.seconds < case.max_seconds


def test_halving_perfusion_doubles_time_constant():
    metrics, _ = verify._run_perfusion(1, None, dt=0.1, w_b=13.3)
    assert all(m.passed for m in metrics)


def test_zero_heating_gives_zero_displacement():
    problem = verify.expansion_problem(delta_T=0.0)
    state, stress, _ = verify.run_free_expansion(problem, t_end=1.0)
    assert np.abs(state.disp).max() == 0.0
    assert stress == 0.0


def test_transversely_isotropic_stretch_along_axis_only():
    problem = verify.expansion_problem(
        delta_T=50.0, alphas=(0.0, 2e-4), kind="transversely_isotropic", axes=((0.0, 0.0, 1.0), None)
    )
    state, _, _ = verify.run_free_expansion(problem)
    nodes = problem.mesh.nodes
    np.testing.assert_allclose(verify.cube_edge_stretches(nodes, state.disp, 2), 1.01, rtol=1e-3)
    np.testing.assert_allclose(verify.cube_edge_stretches(nodes, state.disp, 0), 1.0, atol=1e-3)
    np.testing.assert_allclose(verify.cube_edge_stretches(nodes, state.disp, 1), 1.0, atol=1e-3)


def test_pure_translation_is_exact():
    mesh, material, sources = verify.rigid_problem()
    from thermotled.engine import Problem
    from thermotled.mechanics import MechBCs

    shift = np.array([0.01, -0.02, 0.005])
    moving = Problem(mesh, material, MechBCs(motion=lambda t: np.broadcast_to(shift * min(t, 1.0), mesh.nodes.shape)), sources)
    still = Problem(mesh, material, MechBCs(), sources)
    cfg = SimulationConfig(dt=1e-4, duration=0.01)
    a = Simulation(moving, cfg).run().state
    b = Simulation(still, cfg).run().state
    np.testing.assert_array_equal(a.temperatures, b.temperatures)
    assert np.abs(a.F - np.eye(3)).max() < 1e-15


def test_rotation_matrix():
    R = verify.rotation((1, 1, 1), math.pi / 2)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_unknown_case_and_csv(tmp_path):
    with pytest.raises(KeyError, match="nope"):
        verify.run_cases(["nope"])
    result = verify.CaseResult("x", (verify.Metric("m", 0.5, 1.0),), 0.0, 1)
    verify.write_csv([result], tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines == ["case,metric,value,tolerance,pass", "x,m,0.5,1,true"]


def test_metric_rejects_nan():
    assert not verify.Metric("m", float("nan"), 1.0).passed
