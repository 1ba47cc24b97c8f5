"""Coupled explicit time loop.

Each step runs, in order: deformation gradients from the current
displacements; conduction loads and the temperature update; thermal
deformation gradients from the new element-mean temperatures; internal forces
with the viscous update and hourglass control; the displacement update.
Element phases write element-owned arrays only and node phases gather through
a fixed adjacency order, so results are bit-reproducible for a given worker
count.
"""
from __future__ import annotations

import csv
import logging
import math
import time as _time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels as _kernels
from .bioheat import (
    FixedTemperature,
    HeatSourceSet,
    ThermalState,
    assemble_thermal_loads,
    element_conductivity,
    step_temperature,
    thermal_mass,
)
from .materials import MaterialModel, thermal_deformation_gradient, total_pk2_stress
from .mechanics import MechBCs, MechState, assemble_internal_forces, hourglass_stiffness, step_displacement
from .mesh import Mesh, PrecomputedMesh, critical_timestep, precompute

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "InstabilityError",
    "SimulationConfig",
    "Problem",
    "SimulationState",
    "Snapshot",
    "RunSummary",
    "Simulation",
    "save_checkpoint",
    "load_checkpoint",
    "BENCH_MODES",
    "bench",
    "write_bench_csv",
    "scaling_slope",
]

COUPLINGS = ("coupled", "thermal_only", "mechanical_only")
SNAPSHOT_FIELDS = ("temperature", "displacement", "det_f", "max_principal_stress")
CHECKPOINT_FORMAT = "thermotled-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent simulation input."""


class InstabilityError(RuntimeError):
    """Stepping broke down: a non-finite field or an unphysical state.

    ``node`` is 0-based; the message reports it 1-based.
    """

    def __init__(self, step: int, node: int, quantity: str, what: str = "non-finite"):
        self.step = step
        self.node = node
        self.quantity = quantity
        super().__init__(f"{what} {quantity} at step {step}, node {node + 1}")


@dataclass(frozen=True)
class SimulationConfig:
    dt: float
    duration: float
    coupling: str = "coupled"
    expansion: bool = False
    temperature_dependent: bool = False
    damping: float = 0.0
    hourglass_stiffness: float = 0.1
    snapshot_interval: float = 0.0
    probe_nodes: tuple[int, ...] = ()
    fields: tuple[str, ...] = ("temperature", "displacement")
    ablation_thresholds: tuple[float, ...] = (60.0,)
    allow_unstable_dt: bool = False
    workers: int = 1
    kernels: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"sim.dt must be positive, got {self.dt}")
        if not self.duration >= self.dt:
            raise ConfigError(f"sim.duration ({self.duration}) must be at least sim.dt ({self.dt})")
        if self.coupling not in COUPLINGS:
            raise ConfigError(f"sim.coupling must be one of {', '.join(COUPLINGS)}, got {self.coupling!r}")
        if self.damping < 0:
            raise ConfigError("sim.damping must be nonnegative")
        if self.hourglass_stiffness < 0:
            raise ConfigError("sim.hourglass_stiffness must be nonnegative")
        if self.snapshot_interval < 0:
            raise ConfigError("output.snapshot_interval must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        bad = [f for f in self.fields if f not in SNAPSHOT_FIELDS]
        if bad:
            raise ConfigError(f"unknown output field(s): {', '.join(bad)}")
        if self.kernels is not None and self.kernels not in ("numpy", "cython"):
            raise ConfigError(f"unknown kernel backend {self.kernels!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))

    @property
    def solves_thermal(self) -> bool:
        return self.coupling != "mechanical_only"

    @property
    def solves_mechanics(self) -> bool:
        return self.coupling != "thermal_only"

    @property
    def snapshot_every(self) -> int:
        """Steps between snapshots; 0 means first and last only."""
        if not self.snapshot_interval:
            return 0
        return max(1, int(round(self.snapshot_interval / self.dt)))


@dataclass
class Problem:
    """Everything physical about a run: mesh, material, loads and constraints."""

    mesh: Mesh
    material: MaterialModel
    mech_bcs: MechBCs = field(default_factory=MechBCs)
    sources: HeatSourceSet = field(default_factory=HeatSourceSet)
    fixed_temperatures: list[FixedTemperature] = field(default_factory=list)
    initial_temperature: float | np.ndarray = 37.0


@dataclass
class SimulationState:
    thermal: ThermalState
    mech: MechState
    step: int = 0
    F: np.ndarray | None = None
    F_ther: np.ndarray | None = None

    @property
    def time(self) -> float:
        return self.thermal.time

    @property
    def temperatures(self) -> np.ndarray:
        return self.thermal.temperatures

    @property
    def disp(self) -> np.ndarray:
        return self.mech.disp


@dataclass(frozen=True)
class Snapshot:
    step: int
    time: float
    temperature: np.ndarray
    displacement: np.ndarray
    det_f: np.ndarray | None = None
    max_principal_stress: np.ndarray | None = None


@dataclass
class RunSummary:
    state: SimulationState
    steps: int
    peak_temperature: float
    disp_min: np.ndarray
    disp_max: np.ndarray
    step_times: np.ndarray
    ablation: dict[float, float]
    warnings: list[str]

    @property
    def median_step_time(self) -> float:
        return float(np.median(self.step_times)) if len(self.step_times) else 0.0

    def as_dict(self) -> dict:
        q25, q75 = (np.percentile(self.step_times, [25, 75]) if len(self.step_times) else (0.0, 0.0))
        return {
            "steps": self.steps,
            "time": self.state.time,
            "peak_temperature": self.peak_temperature,
            "final_max_temperature": float(self.state.temperatures.max()),
            "disp_min": [float(v) for v in self.disp_min],
            "disp_max": [float(v) for v in self.disp_max],
            "median_step_time": self.median_step_time,
            "step_time_iqr": float(q75 - q25),
            "ablation_volume": {str(k): v for k, v in self.ablation.items()},
            "warnings": list(self.warnings),
        }


Sink = Callable[[Snapshot], None]


class Simulation:
    """A validated problem ready to step.

    Reference-configuration data, constant thermal mass and conductivity,
    hourglass scales and source powers are computed once here.
    """

    def __init__(self, problem: Problem, config: SimulationConfig, backend=None):
        self.problem = problem
        self.config = config
        self.backend = backend or (
            _kernels.load_backend(config.kernels) if config.kernels else _kernels.default
        )
        mat = problem.material
        props = mat.thermal
        mesh = problem.mesh
        if config.expansion and mat.expansion.kind != "isotropic":
            if mesh.expansion_axes is None and mat.axes is None:
                raise ConfigError(f"{mat.expansion.kind} expansion needs principal axes")
        c_ref = float(props.specific_heat_at(props.reference_temperature))
        self.pre: PrecomputedMesh = precompute(mesh, props.density, c_ref)
        self.hg_k = hourglass_stiffness(self.pre, mat, config.hourglass_stiffness)
        self.fibers = self._resolve_fibers()
        self.axes = self._resolve_axes()
        self.bcs = problem.mech_bcs.with_ramp(config.duration)
        self.loads = self.bcs.load_vector(mesh.n_nodes, self.pre.node_volume)
        if not np.any(self.loads):
            self.loads = None
        if config.temperature_dependent:
            self._D_const = None
            self._C_const = None
        else:
            self._D_const = element_conductivity(props, None, mesh.elements, False)
            self._C_const = thermal_mass(props, self.pre.node_volume, None, False)
        self._source_cache: dict[tuple[bool, ...], np.ndarray | None] = {}
        self.warnings: list[str] = []
        self.critical = self._check_timestep()

    # -- setup helpers -----------------------------------------------------

    def _resolve_fibers(self):
        mat, mesh = self.problem.material, self.problem.mesh
        if not mat.hyperelastic.anisotropic:
            return None
        if mesh.fiber_dirs is not None:
            return np.ascontiguousarray(mesh.fiber_dirs)
        if mat.fiber is None:
            raise ConfigError("anisotropic material needs a fiber direction")
        return np.ascontiguousarray(np.broadcast_to(np.asarray(mat.fiber, dtype=float), (mesh.n_elements, 3)))

    def _resolve_axes(self):
        mat, mesh = self.problem.material, self.problem.mesh
        if mat.expansion.kind == "isotropic":
            return None
        if mesh.expansion_axes is not None:
            ax = mesh.expansion_axes
            return ax[:, 0], (ax[:, 1] if ax.shape[1] > 1 else None)
        if mat.axes is None:
            return None
        m = np.asarray(mat.axes[0], dtype=float)
        n = np.asarray(mat.axes[1], dtype=float) if len(mat.axes) > 1 else None
        return m, n

    def _check_timestep(self) -> tuple[float, float]:
        cfg = self.config
        hg = cfg.hourglass_stiffness if self.pre.hourglass is not None else 0.0
        dt_th, dt_mech = critical_timestep(
            self.problem.mesh, self.problem.material, pre=self.pre, hourglass_stiffness=hg
        )
        limits = []
        if cfg.solves_thermal:
            limits.append(dt_th)
        if cfg.solves_mechanics:
            limits.append(dt_mech)
        if cfg.dt > min(limits):
            msg = (
                f"dt={cfg.dt:.6g} s exceeds the critical time step "
                f"(thermal {dt_th:.6g} s, mechanical {dt_mech:.6g} s)"
            )
            if not cfg.allow_unstable_dt:
                raise ConfigError(msg)
            self.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return dt_th, dt_mech

    # -- state ---------------------------------------------------------------

    def initial_state(self) -> SimulationState:
        mesh = self.problem.mesh
        T = np.broadcast_to(
            np.asarray(self.problem.initial_temperature, dtype=float), (mesh.n_nodes,)
        ).copy()
        for bc in self.problem.fixed_temperatures:
            T[bc.nodes] = bc.value
        mech = MechState.at_rest(mesh.n_nodes, mesh.n_elements, len(self.problem.material.prony))
        self.bcs.apply(mech.disp, 0.0)
        mech.disp_prev[:] = mech.disp
        return SimulationState(ThermalState(T, 0.0), mech, 0)

    def _source_power(self, t: float):
        sources = self.problem.sources
        if not sources.regional:
            return None
        key = sources.schedule_key(t)
        if key not in self._source_cache:
            self._source_cache[key] = sources.nodal_power(t, self.pre) if any(key) else None
        return self._source_cache[key]

    def conductivity(self, T) -> np.ndarray:
        if self._D_const is not None:
            return self._D_const
        return element_conductivity(self.problem.material.thermal, T, self.problem.mesh.elements, True)

    def thermal_gradient(self, T) -> np.ndarray | None:
        """Per-element thermal deformation gradients, or ``None`` when expansion is off."""
        spec = self.problem.material.expansion
        if not self.config.expansion or spec.is_null:
            return None
        Te = T[self.problem.mesh.elements].mean(axis=1)
        return np.ascontiguousarray(thermal_deformation_gradient(Te, spec, self.axes))

    # -- stepping --------------------------------------------------------------

    def step(self, state: SimulationState) -> SimulationState:
        cfg, pre, k, w = self.config, self.pre, self.backend, self.config.workers
        mat = self.problem.material
        conn = pre.mesh.elements
        t = state.time
        t_next = (state.step + 1) * cfg.dt
        disp = state.mech.disp

        F = k.deformation_gradients(conn, pre.grad_h0, disp, w)

        T = state.thermal.temperatures
        if cfg.solves_thermal:
            loads = assemble_thermal_loads(pre, F, self.conductivity(T), T, k, w)
            thermal = step_temperature(
                state.thermal,
                loads,
                mat.thermal,
                pre.node_volume,
                cfg.dt,
                source_power=self._source_power(t),
                fixed=self.problem.fixed_temperatures,
                temperature_dependent=cfg.temperature_dependent,
                thermal_mass_diag=self._C_const,
            )
            thermal.time = t_next
        else:
            thermal = ThermalState(T, t_next)

        F_ther = None
        if cfg.solves_mechanics:
            F_ther = self.thermal_gradient(thermal.temperatures)
            if F_ther is not None:
                self._check_thermal_stretch(state.step + 1, thermal.temperatures)
            hist = state.mech.viscous.copy()
            forces = assemble_internal_forces(
                pre, F, mat, hist, cfg.dt, disp, F_ther, self.hg_k, k, w, fibers=self.fibers
            )
            mech = step_displacement(
                MechState(disp, state.mech.disp_prev, hist),
                forces, self.bcs, pre.lumped_mass, cfg.damping, cfg.dt, t_next, self.loads,
            )
        else:
            mech = state.mech

        new = SimulationState(thermal, mech, state.step + 1, F, F_ther)
        self._check_finite(new)
        return new

    def _check_thermal_stretch(self, step: int, T) -> None:
        """Reject temperatures that would invert the stress-free thermal stretch."""
        spec = self.problem.material.expansion
        conn = self.problem.mesh.elements
        Te = T[conn].mean(axis=1)
        dT = Te - spec.reference_temperature
        lam = np.min([1.0 + a * dT for a in spec.alphas], axis=0)
        if lam.min() > 0:
            return
        e = int(np.argmin(lam))
        raise InstabilityError(step, int(conn[e, np.argmax(np.abs(T[conn[e]]))]), "thermal stretch", "nonpositive")

    @staticmethod
    def _check_finite(state: SimulationState) -> None:
        T = state.thermal.temperatures
        if not np.isfinite(T).all():
            raise InstabilityError(state.step, int(np.argmin(np.isfinite(T))), "temperature")
        u = state.mech.disp
        if not np.isfinite(u).all():
            raise InstabilityError(state.step, int(np.argmin(np.isfinite(u).all(axis=1))), "displacement")

    # -- output ------------------------------------------------------------------

    def snapshot(self, state: SimulationState) -> Snapshot:
        fields = self.config.fields
        det_f = stress = None
        if "det_f" in fields or "max_principal_stress" in fields:
            F = state.F
            if F is None:
                F = self.backend.deformation_gradients(
                    self.pre.mesh.elements, self.pre.grad_h0, state.mech.disp, 1
                )
            if "det_f" in fields:
                det_f = np.linalg.det(F)
            if "max_principal_stress" in fields:
                stress = self.max_principal_stress(F, state)
        return Snapshot(
            state.step,
            state.time,
            state.thermal.temperatures.copy(),
            state.mech.disp.copy(),
            det_f,
            stress,
        )

    def max_principal_stress(self, F, state: SimulationState) -> np.ndarray:
        """Largest principal Cauchy stress per element (Pa)."""
        mat = self.problem.material
        F_ther = self.thermal_gradient(state.thermal.temperatures) if self.config.solves_mechanics else None
        S = total_pk2_stress(F, F_ther, mat.hyperelastic, self.fibers)
        if len(mat.prony):
            S = S - state.mech.viscous.sum(axis=1)
        J = np.linalg.det(F)
        sigma = F @ S @ np.swapaxes(F, -1, -2) / J[:, None, None]
        return np.linalg.eigvalsh(0.5 * (sigma + np.swapaxes(sigma, -1, -2)))[:, -1]

    def run(
        self,
        state: SimulationState | None = None,
        sinks: Iterable[Sink] = (),
        n_steps: int | None = None,
    ) -> RunSummary:
        """Advance to the configured duration (or ``n_steps`` more steps).

        Sinks receive a :class:`Snapshot` at step 0, every ``snapshot_every``
        steps and at the last step.
        """
        from .io import ablation_volume

        sinks = list(sinks)
        state = state or self.initial_state()
        if n_steps is None:
            n_steps = max(0, self.config.n_steps - state.step)
        every = self.config.snapshot_every
        last = state.step + n_steps

        def emit(s):
            if sinks:
                snap = self.snapshot(s)
                for sink in sinks:
                    sink(snap)

        if state.step == 0:
            emit(state)
        peak = float(state.thermal.temperatures.max())
        umin = state.mech.disp.min(axis=0)
        umax = state.mech.disp.max(axis=0)
        times = np.empty(n_steps)
        for i in range(n_steps):
            t0 = _time.perf_counter()
            state = self.step(state)
            times[i] = _time.perf_counter() - t0
            peak = max(peak, float(state.thermal.temperatures.max()))
            if self.config.solves_mechanics:
                np.minimum(umin, state.mech.disp.min(axis=0), out=umin)
                np.maximum(umax, state.mech.disp.max(axis=0), out=umax)
            if state.step == last or (every and state.step % every == 0):
                emit(state)

        deformed = state.mech.disp if self.config.solves_mechanics else None
        ablation = {
            float(th): ablation_volume(state.thermal.temperatures, self.problem.mesh, th, deformed).volume
            for th in self.config.ablation_thresholds
        }
        return RunSummary(state, n_steps, peak, umin, umax, times, ablation, list(self.warnings))


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: SimulationState) -> None:
    """Write ``state`` as an uncompressed ``.npz`` archive.

    Arrays stored: ``format`` (string), ``version`` (int), ``step`` (int64),
    ``time`` (float64), ``temperature`` (N,), ``disp`` and ``disp_prev``
    (N, 3), ``viscous`` (E, P, 3, 3). All float arrays are float64 so a load
    reproduces the state bit for bit; deformation gradients are derived data
    and are recomputed on the next step.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format=np.array(CHECKPOINT_FORMAT),
            version=np.array(CHECKPOINT_VERSION),
            step=np.array(state.step, dtype=np.int64),
            time=np.array(state.time, dtype=np.float64),
            temperature=state.thermal.temperatures,
            disp=state.mech.disp,
            disp_prev=state.mech.disp_prev,
            viscous=state.mech.viscous,
        )


def load_checkpoint(path) -> SimulationState:
    with np.load(Path(path), allow_pickle=False) as data:
        if str(data["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a checkpoint file")
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        thermal = ThermalState(data["temperature"].copy(), float(data["time"]))
        mech = MechState(data["disp"].copy(), data["disp_prev"].copy(), data["viscous"].copy())
        return SimulationState(thermal, mech, int(data["step"]))


# ----------------------------------------------------------------------------
# benchmark

BENCH_MODES = {
    "TherMechTI": dict(coupling="coupled", expansion=False, temperature_dependent=False),
    "TherMechExpanTI": dict(coupling="coupled", expansion=True, temperature_dependent=False),
    "TherMechExpanTD": dict(coupling="coupled", expansion=True, temperature_dependent=True),
}


@dataclass(frozen=True)
class BenchRow:
    kind: str
    n_elements: int
    n_nodes: int
    mode: str
    median: float
    iqr: float


def bench_problem(mesh: Mesh, material: MaterialModel) -> Problem:
    """Heated block: a central spherical source, bottom face fixed."""
    from .io import sphere_elements

    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    centre = 0.5 * (lo + hi)
    radius = 0.25 * float((hi - lo).min())
    src = sphere_elements(mesh, centre, radius)
    from .bioheat import RegionalSource

    return Problem(
        mesh,
        material,
        MechBCs(fixed_nodes=mesh.node_set("zmin")),
        HeatSourceSet([RegionalSource(src, 9705360.0, name="centre")]),
    )


def bench(
    meshes: Sequence[Mesh],
    material: MaterialModel,
    modes: Sequence[str] = tuple(BENCH_MODES),
    steps: int = 20,
    warmup: int = 2,
    workers: int = 1,
    backend=None,
    repeats: int = 1,
) -> list[BenchRow]:
    """Median per-step wall time for each mesh and mode.

    Time steps come from the cheap edge estimate with a wide margin; a short
    run only needs to stay finite.
    """
    sims, states, samples = {}, {}, {}
    for mesh in meshes:
        problem = bench_problem(mesh, material)
        dt_th, dt_mech = critical_timestep(mesh, material, method="edge")
        dt = 0.5 * min(dt_th, dt_mech)
        for mode in modes:
            cfg = SimulationConfig(
                dt=dt,
                duration=dt * (repeats * steps + warmup),
                allow_unstable_dt=True,
                workers=workers,
                **BENCH_MODES[mode],
            )
            key = (id(mesh), mode)
            sims[key] = _UncheckedSimulation(problem, cfg, backend)
            state = sims[key].initial_state()
            for _ in range(warmup):
                state = sims[key].step(state)
            states[key] = state
            samples[key] = []
    # every repeat visits every mesh and mode, so slow drifts in machine
    # load are spread over the whole ladder instead of biasing one point
    for _ in range(repeats):
        for key, sim in sims.items():
            state = states[key]
            for _ in range(steps):
                t0 = _time.perf_counter()
                state = sim.step(state)
                samples[key].append(_time.perf_counter() - t0)
            states[key] = state
    rows = []
    for mesh in meshes:
        for mode in modes:
            q25, q50, q75 = np.percentile(samples[(id(mesh), mode)], [25, 50, 75])
            rows.append(BenchRow(mesh.kind, mesh.n_elements, mesh.n_nodes, mode, float(q50), float(q75 - q25)))
            log.info("bench %s %d elements %s: %.3g s/step", mesh.kind, mesh.n_elements, mode, q50)
    return rows


class _UncheckedSimulation(Simulation):
    """Skips the element eigenvalue check, which would dominate short benchmark runs."""

    def _check_timestep(self):
        return (math.nan, math.nan)


def write_bench_csv(rows: Sequence[BenchRow], path) -> None:
    """CSV with one row per (mesh, mode): kind,elements,nodes,mode,median_s,iqr_s."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "elements", "nodes", "mode", "median_s", "iqr_s"])
        for r in rows:
            w.writerow([r.kind, r.n_elements, r.n_nodes, r.mode, "%.6e" % r.median, "%.6e" % r.iqr])


def scaling_slope(rows: Sequence[BenchRow], mode: str) -> float:
    """Least-squares slope of log(time) against log(elements) for one mode."""
    pts = [(r.n_elements, r.median) for r in rows if r.mode == mode]
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def rows_by_size(rows: Sequence[BenchRow]) -> dict[int, dict[str, float]]:
    out: dict[int, dict[str, float]] = {}
    for r in rows:
        out.setdefault(r.n_elements, {})[r.mode] = r.median
    return out
