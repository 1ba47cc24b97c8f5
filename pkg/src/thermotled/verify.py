"""Oracle cases: closed-form solutions checked against the solver.

Expected values are computed here with plain numpy and never through the
solver modules, so a bug in the solver cannot cancel in the comparison.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bioheat import FixedTemperature, HeatSourceSet, RegionalSource
from .engine import Problem, Simulation, SimulationConfig
from .materials import ExpansionSpec, PronySeries, PropertyTable, ThermalProps, total_pk2_stress
from .mechanics import MechBCs, Prescribed, assemble_internal_forces
from .mesh import box_mesh, critical_timestep
from . import presets

__all__ = [
    "Metric",
    "CaseResult",
    "OracleCase",
    "slab_series",
    "perfusion_solution",
    "relaxation_oracle",
    "CASES",
    "case_names",
    "run_cases",
    "write_csv",
    "paired_peak_temperatures",
    "VERIFY_HEADER",
]

VERIFY_HEADER = ("case", "metric", "value", "tolerance", "pass")


@dataclass(frozen=True)
class Metric:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)


@dataclass(frozen=True)
class CaseResult:
    case: str
    metrics: tuple[Metric, ...]
    seconds: float
    steps: int

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)


@dataclass(frozen=True)
class OracleCase:
    """A self-contained check: ``runner(workers, backend)`` returns ``(metrics, steps)``."""

    name: str
    description: str
    tolerance: float
    max_steps: int
    max_seconds: float
    runner: Callable

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def run(self, workers: int = 1, backend=None) -> CaseResult:
        t0 = time.perf_counter()
        metrics, steps = self.runner(workers, backend)
        return CaseResult(self.name, tuple(metrics), time.perf_counter() - t0, steps)


# ----------------------------------------------------------------------------
# closed forms


def slab_series(x, t, length, T0, T_left, T_right, diffusivity, terms: int = 50):
    """1D slab with fixed end temperatures and uniform initial ``T0``."""
    x = np.asarray(x, dtype=float)
    steady = T_left + (T_right - T_left) * x / length
    out = steady.copy()
    for n in range(1, terms + 1):
        sign = (-1.0) ** n
        b = 2.0 / (n * math.pi) * ((T0 - T_left) * (1.0 - sign) + (T_right - T_left) * sign)
        out += b * np.sin(n * math.pi * x / length) * math.exp(-diffusivity * (n * math.pi / length) ** 2 * t)
    return out


def perfusion_solution(t, T0, T_a, w_b, c_b, rho, c):
    return T_a + (T0 - T_a) * np.exp(-w_b * c_b * np.asarray(t, dtype=float) / (rho * c))


def relaxation_oracle(t, phis, taus):
    t = np.asarray(t, dtype=float)
    phis = np.asarray(phis, dtype=float)
    out = (1.0 - phis.sum()) * np.ones_like(t)
    for p, tau in zip(phis, taus):
        out = out + p * np.exp(-t / tau)
    return out


def _steps_for(t_end: float, dt_limit: float, fraction: float) -> tuple[int, float]:
    n = int(math.ceil(t_end / (fraction * dt_limit)))
    return n, t_end / n


# ----------------------------------------------------------------------------
# slab conduction


SLAB_LENGTH = 0.05


def slab_problem(n: int = 20, kind: str = "T4"):
    """Extruded bar, one element across, hot left end, adiabatic sides."""
    h = SLAB_LENGTH / n
    mesh = box_mesh((SLAB_LENGTH, h, h), (n, 1, 1), kind)
    material = presets.soft_tissue(alpha=0.0)
    fixed = [
        FixedTemperature(mesh.node_set("xmin"), 60.0),
        FixedTemperature(mesh.node_set("xmax"), 37.0),
    ]
    return Problem(mesh, material, fixed_temperatures=fixed, initial_temperature=37.0)


def _run_slab(workers, backend, n=20, fraction=0.5):
    problem = slab_problem(n)
    props = problem.material.thermal
    rho, c, k = props.density, 3700.0, 0.518
    t_check = 0.1 * rho * c * SLAB_LENGTH**2 / k
    dt_th, _ = critical_timestep(problem.mesh, problem.material)
    steps, dt = _steps_for(t_check, dt_th, fraction)
    cfg = SimulationConfig(dt=dt, duration=steps * dt, coupling="thermal_only", workers=workers)
    sim = Simulation(problem, cfg, backend)
    state = sim.run().state
    x = problem.mesh.nodes[:, 0]
    interior = (x > 1e-12) & (x < SLAB_LENGTH - 1e-12)
    exact = slab_series(x[interior], state.time, SLAB_LENGTH, 37.0, 60.0, 37.0, k / (rho * c))
    err = np.linalg.norm(state.temperatures[interior] - exact) / np.linalg.norm(exact - 37.0)
    return [Metric("rel_l2_error", float(err), 0.02)], steps


def oracle_slab_conduction() -> OracleCase:
    return OracleCase(
        "slab_conduction",
        "transient conduction in a bar with fixed end temperatures vs 50-term Fourier series",
        0.02, 2000, 60.0, _run_slab,
    )


# ----------------------------------------------------------------------------
# perfusion decay


def perfusion_problem(T0: float = 47.0, w_b: float = 26.6):
    mesh = box_mesh((0.01, 0.01, 0.01), (2, 2, 2), "H8")
    props = ThermalProps(
        density=1060.0,
        specific_heat=PropertyTable.constant(3600.0),
        conductivity=PropertyTable.constant(0.53),
        perfusion_rate=w_b,
        blood_specific_heat=3617.0,
        arterial_temperature=37.0,
    )
    base = presets.liver(anisotropic=False, viscous=False)
    return Problem(mesh, replace(base, thermal=props), initial_temperature=T0)


def perfusion_time_constant(rho=1060.0, c=3600.0, w_b=26.6, c_b=3617.0) -> float:
    return rho * c / (w_b * c_b)


def fit_time_constant(t, T, T_a) -> float:
    """Least-squares time constant of ``T - T_a = A exp(-t/tau)``."""
    slope = np.polyfit(np.asarray(t), np.log(np.asarray(T) - T_a), 1)[0]
    return -1.0 / slope


def _run_perfusion(workers, backend, dt=0.05, w_b=26.6):
    problem = perfusion_problem(w_b=w_b)
    tau = perfusion_time_constant(w_b=w_b)
    steps = int(math.ceil(tau / dt))
    dt = tau / steps
    cfg = SimulationConfig(dt=dt, duration=steps * dt, coupling="thermal_only", workers=workers)
    sim = Simulation(problem, cfg, backend)
    state = sim.initial_state()
    times, temps = [0.0], [float(state.temperatures.mean())]
    for _ in range(steps):
        state = sim.step(state)
        times.append(state.time)
        temps.append(float(state.temperatures.mean()))
    exact = perfusion_solution(state.time, 47.0, 37.0, w_b, 3617.0, 1060.0, 3600.0)
    err = abs((temps[-1] - 37.0) - (exact - 37.0)) / abs(exact - 37.0)
    tau_fit = fit_time_constant(times, temps, 37.0)
    spread = float(np.ptp(state.temperatures))
    return [
        Metric("rel_error_at_tau", err, 0.005),
        Metric("time_constant_rel_error", abs(tau_fit - tau) / tau, 0.01),
        Metric("spatial_spread", spread, 1e-9),
    ], steps


def oracle_perfusion_decay() -> OracleCase:
    return OracleCase(
        "perfusion_decay",
        "uniform field relaxing to arterial temperature through perfusion",
        0.005, 2000, 10.0, _run_perfusion,
    )


# ----------------------------------------------------------------------------
# free thermal expansion


CUBE = 1.0


def expansion_problem(
    delta_T: float = 50.0,
    alphas=(1e-4,),
    kind: str = "isotropic",
    axes=None,
    element: str = "T4",
    divisions: int = 2,
):
    """Unit cube at uniform temperature with six scalar supports, no rigid modes."""
    mesh = box_mesh((CUBE, CUBE, CUBE), (divisions,) * 3, element)
    x = mesh.nodes
    tol = 1e-12

    def at(p):
        return np.nonzero(np.all(np.abs(x - np.asarray(p)) < tol, axis=1))[0]

    origin, ex, ey = at((0, 0, 0)), at((CUBE, 0, 0)), at((0, CUBE, 0))
    pres = [Prescribed(origin, c, 0.0, 0.0) for c in range(3)]
    pres += [Prescribed(ex, 1, 0.0, 0.0), Prescribed(ex, 2, 0.0, 0.0), Prescribed(ey, 2, 0.0, 0.0)]
    props = ThermalProps(
        density=1060.0,
        specific_heat=PropertyTable.constant(3600.0),
        conductivity=PropertyTable.constant(0.53),
    )
    base = presets.liver(anisotropic=False, viscous=False)
    material = replace(
        base,
        thermal=props,
        expansion=ExpansionSpec(kind, tuple(alphas)),
        axes=axes,
    )
    return Problem(mesh, material, MechBCs(prescribed=pres), initial_temperature=37.0 + delta_T)


def cube_edges(nodes) -> list[tuple[int, int, int]]:
    """The 12 outer edges of a box mesh as ``(node_a, node_b, axis)``."""
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    corners = {}
    for i, p in enumerate(nodes):
        at_hi = np.abs(p - hi) < 1e-12
        if np.all(at_hi | (np.abs(p - lo) < 1e-12)):
            corners[tuple(at_hi.astype(int))] = i
    edges = []
    for key, i in corners.items():
        for d in range(3):
            if key[d] == 0:
                other = list(key)
                other[d] = 1
                edges.append((i, corners[tuple(other)], d))
    return edges


def cube_edge_stretches(nodes, disp, axis: int | None = None) -> np.ndarray:
    """Stretch of the outer box edges (optionally only those along ``axis``)."""
    out = []
    for i, j, d in cube_edges(nodes):
        if axis is None or d == axis:
            L0 = np.linalg.norm(nodes[j] - nodes[i])
            out.append(np.linalg.norm(nodes[j] + disp[j] - nodes[i] - disp[i]) / L0)
    return np.array(out)


def max_abs_cauchy(F, S) -> float:
    J = np.linalg.det(F)
    sigma = F @ S @ np.swapaxes(F, -1, -2) / J[:, None, None]
    return float(np.abs(np.linalg.eigvalsh(sigma)).max())


def run_free_expansion(problem: Problem, workers=1, backend=None, t_end=40.0, damping=1.0, fraction=0.5):
    """Damped run to rest; returns ``(state, max |principal Cauchy stress|, steps)``.

    The damping is close to critical for the slowest shear mode of the
    default cube, which sets the settling time.
    """
    _, dt_mech = critical_timestep(
        problem.mesh, problem.material, hourglass_stiffness=0.1 if problem.mesh.kind == "H8" else 0.0
    )
    steps, dt = _steps_for(t_end, dt_mech, fraction)
    cfg = SimulationConfig(
        dt=dt, duration=steps * dt, coupling="coupled", expansion=True, damping=damping, workers=workers
    )
    sim = Simulation(problem, cfg, backend)
    state = sim.run().state
    F = sim.backend.deformation_gradients(problem.mesh.elements, sim.pre.grad_h0, state.disp, 1)
    F_ther = sim.thermal_gradient(state.temperatures)
    S = total_pk2_stress(F, F_ther, problem.material.hyperelastic)
    return state, max_abs_cauchy(F, S), steps


def _run_free_expansion(workers, backend):
    delta_T, alpha = 50.0, 1e-4
    problem = expansion_problem(delta_T, (alpha,))
    state, stress, steps = run_free_expansion(problem, workers, backend)
    target = 1.0 + alpha * delta_T
    stretch = float(cube_edge_stretches(problem.mesh.nodes, state.disp).mean())
    mu = problem.material.hyperelastic.mu
    return [
        Metric("stretch_rel_error", abs(stretch - target) / target, 1e-3),
        Metric("strain_rel_error", abs(stretch - target) / (target - 1.0), 1e-3),
        Metric("residual_stress_over_mu", stress / mu, 1e-4),
    ], steps


def oracle_free_expansion() -> OracleCase:
    return OracleCase(
        "free_expansion",
        "uniformly heated unit cube settling to the stress-free stretch 1 + alpha dT",
        1e-3, 5000, 30.0, _run_free_expansion,
    )


# ----------------------------------------------------------------------------
# stress relaxation


RELAX_STRAIN = 1e-3


def relaxation_problem(prony=((0.5, 0.58),)):
    """Unit cube whose nodes all follow a held uniaxial step strain."""
    mesh = box_mesh((1.0, 1.0, 1.0), (1, 1, 1), "H8")
    base = presets.liver(anisotropic=False, viscous=False)
    material = replace(base, prony=PronySeries(tuple(prony)))
    field = np.zeros_like(mesh.nodes)
    field[:, 2] = RELAX_STRAIN * mesh.nodes[:, 2]
    bcs = MechBCs(motion=lambda t: field)
    return Problem(mesh, material, bcs)


def relaxation_history(problem: Problem, dt: float, t_end: float, workers=1, backend=None):
    """Times and the normalised axial PK2 stress after each step."""
    steps = int(round(t_end / dt))
    cfg = SimulationConfig(dt=dt, duration=steps * dt, coupling="mechanical_only", workers=workers)
    sim = Simulation(problem, cfg, backend)
    state = sim.initial_state()
    F = sim.backend.deformation_gradients(problem.mesh.elements, sim.pre.grad_h0, state.disp, 1)
    S0 = total_pk2_stress(F, None, problem.material.hyperelastic)[0, 2, 2]
    times, ratio = [], []
    for _ in range(steps):
        state = sim.step(state)
        S = total_pk2_stress(state.F, None, problem.material.hyperelastic)[0]
        S_tilde = S - state.mech.viscous[0].sum(axis=0)
        times.append(state.time)
        ratio.append(S_tilde[2, 2] / S0)
    return np.array(times), np.array(ratio)


def _run_relaxation(workers, backend, dt=1e-3):
    problem = relaxation_problem()
    tau = 0.58
    t, r = relaxation_history(problem, dt, 5 * tau, workers, backend)
    expected = relaxation_oracle(t, [0.5], [tau])
    err = float(np.max(np.abs(r - expected) / expected))
    t2, r2 = relaxation_history(problem, dt / 2, 5 * tau, workers, backend)
    sens = float(np.max(np.abs(r2[1::2] - r) / r))
    return [
        Metric("max_rel_error", err, 0.01),
        Metric("final_rel_error", abs(r[-1] - expected[-1]) / expected[-1], 0.01),
        Metric("half_dt_change", sens, 0.002),
    ], len(t) + len(t2)


def oracle_stress_relaxation() -> OracleCase:
    return OracleCase(
        "stress_relaxation",
        "held 0.1 % step strain; normalised stress vs the Prony relaxation function",
        0.01, 10000, 30.0, _run_relaxation,
    )


# ----------------------------------------------------------------------------
# rigid motion


def rotation(axis, angle) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


def rigid_motion_field(nodes, t_end, angle=math.pi / 2, axis=(1, 1, 1), shift=(0.01, -0.02, 0.005)):
    """Rotate about the centroid to ``angle`` and back while translating out and back."""
    centre = nodes.mean(axis=0)
    rel = nodes - centre
    shift = np.asarray(shift, dtype=float)

    def motion(t):
        s = math.sin(math.pi * min(max(t / t_end, 0.0), 1.0))  # 0 -> 1 -> 0
        R = rotation(axis, angle * s)
        return rel @ R.T - rel + s * shift

    return motion


def rigid_problem(n: int = 4, size: float = 0.03):
    mesh = box_mesh((size,) * 3, (n,) * 3, "T4")
    base = presets.liver(anisotropic=False, viscous=True, perfusion=True)
    props = replace(
        base.thermal,
        specific_heat=PropertyTable.constant(3600.0),
        conductivity=PropertyTable.constant(0.53),
    )
    material = replace(base, thermal=props)
    centre = mesh.nodes.mean(axis=0)
    d = np.linalg.norm(mesh.centroids() - centre, axis=1)
    src = np.nonzero(d <= 0.3 * size)[0]
    sources = HeatSourceSet([RegionalSource(src, presets.LIVER_SOURCE_POWER, name="core")])
    return mesh, material, sources


def _run_rigid(workers, backend, t_end=1.0):
    mesh, material, sources = rigid_problem()
    size = float(np.ptp(mesh.nodes[:, 0]))
    motion = rigid_motion_field(mesh.nodes, t_end)
    moving = Problem(mesh, material, MechBCs(motion=motion), sources)
    still = Problem(mesh, material, MechBCs(), sources)
    _, dt_mech = critical_timestep(mesh, material)
    steps, dt = _steps_for(t_end, dt_mech, 0.5)
    cfg = SimulationConfig(dt=dt, duration=steps * dt, coupling="coupled", workers=workers)
    sim_m = Simulation(moving, cfg, backend)
    sim_s = Simulation(still, cfg, backend)
    sm, ss = sim_m.initial_state(), sim_s.initial_state()
    interior = mesh.node_set("interior")
    mu = material.hyperelastic.mu
    force_scale = mu * size * size
    worst_force = 0.0
    worst_T = 0.0
    for i in range(steps):
        sm, ss = sim_m.step(sm), sim_s.step(ss)
        if i % 10 == 0 or i == steps - 1:
            hist = sm.mech.viscous.copy()
            F = sim_m.backend.deformation_gradients(mesh.elements, sim_m.pre.grad_h0, sm.disp, 1)
            f = assemble_internal_forces(sim_m.pre, F, material, hist, dt, sm.disp, backend=sim_m.backend)
            worst_force = max(worst_force, float(np.abs(f[interior]).max()))
        worst_T = max(worst_T, float(np.abs(sm.temperatures[interior] - ss.temperatures[interior]).max()))
    F_end = sim_m.backend.deformation_gradients(mesh.elements, sim_m.pre.grad_h0, sm.disp, 1)
    return [
        Metric("interior_force_over_mu_area", worst_force / force_scale, 1e-9),
        Metric("temperature_difference", worst_T, 1e-10),
        Metric("cycle_return_disp_over_size", float(np.abs(sm.disp).max()) / size, 1e-10),
        Metric("cycle_return_F_error", float(np.abs(F_end - np.eye(3)).max()), 1e-10),
    ], 2 * steps


def oracle_rigid_motion() -> OracleCase:
    return OracleCase(
        "rigid_motion",
        "heated block carried through a rigid rotation and back vs a static run",
        1e-9, 10000, 60.0, _run_rigid,
    )


def paired_peak_temperatures(divisions: int = 6, size: float = 0.03, duration: float = 2.0,
                             dt: float = 2e-4, workers: int = 1, backend=None) -> dict[str, float]:
    """Peak temperature of a sphere-heated liver block under each bench mode.

    Expansion and temperature-dependent properties should each lower the peak.
    """
    from .engine import BENCH_MODES, bench_problem

    mesh = box_mesh((size, size, size), (divisions,) * 3, "T4")
    problem = bench_problem(mesh, presets.liver())
    peaks = {}
    for mode, flags in BENCH_MODES.items():
        cfg = SimulationConfig(dt=dt, duration=duration, workers=workers, **flags)
        peaks[mode] = Simulation(problem, cfg, backend).run().peak_temperature
    return peaks


# ----------------------------------------------------------------------------
# suite


CASES: dict[str, Callable[[], OracleCase]] = {
    "slab_conduction": oracle_slab_conduction,
    "perfusion_decay": oracle_perfusion_decay,
    "free_expansion": oracle_free_expansion,
    "stress_relaxation": oracle_stress_relaxation,
    "rigid_motion": oracle_rigid_motion,
}


def case_names() -> list[str]:
    return list(CASES)


def run_cases(names: Sequence[str] | None = None, workers: int = 1, backend=None) -> list[CaseResult]:
    names = list(names) if names else case_names()
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise KeyError(f"unknown verification case(s): {', '.join(unknown)}")
    return [CASES[n]().run(workers, backend) for n in names]


def write_csv(results: Sequence[CaseResult], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VERIFY_HEADER)
        for r in results:
            for m in r.metrics:
                w.writerow([r.case, m.name, "%.9g" % m.value, "%.9g" % m.tolerance, str(m.passed).lower()])
