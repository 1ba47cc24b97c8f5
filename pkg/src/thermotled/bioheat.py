"""Explicit Pennes bioheat stepping on the deforming configuration.

Conduction is evaluated in the reference configuration with the pulled-back
element kernel ``V0 det(F) (G F^-1)^T D (G F^-1) T_e``; perfusion, metabolic
heat and regional sources are lumped to nodes by the same volume shares as the
thermal mass. The update subtracts the conduction load so heat flows from hot
to cold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels as _kernels
from .materials import ThermalProps

__all__ = [
    "ThermalState",
    "RegionalSource",
    "HeatSourceSet",
    "FixedTemperature",
    "element_thermal_load",
    "element_conductivity",
    "assemble_thermal_loads",
    "step_temperature",
]


@dataclass
class ThermalState:
    temperatures: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.temperatures = np.asarray(self.temperatures, dtype=float)


@dataclass(frozen=True, eq=False)
class RegionalSource:
    """Uniform volumetric source ``power`` (W/m^3) over ``elements`` while ``start <= t < end``."""

    elements: np.ndarray
    power: float
    start: float = 0.0
    end: float = math.inf
    name: str = ""

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f"heat source {self.name!r} has negative power")
        if not self.start < self.end:
            raise ValueError(f"heat source {self.name!r} schedule needs start < end")
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=np.int64))

    def active(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass
class HeatSourceSet:
    regional: list[RegionalSource] = field(default_factory=list)

    def nodal_power(self, t: float, pre) -> np.ndarray:
        """Regional source power per node (W) at time ``t``."""
        out = np.zeros(pre.mesh.n_nodes)
        for src in self.regional:
            if src.active(t) and len(src.elements):
                per_elem = np.zeros(pre.mesh.n_elements)
                per_elem[src.elements] = src.power * pre.ref_volume[src.elements]
                out += pre.element_to_nodes(per_elem)
        return out

    def schedule_key(self, t: float) -> tuple[bool, ...]:
        return tuple(src.active(t) for src in self.regional)


@dataclass(frozen=True, eq=False)
class FixedTemperature:
    nodes: np.ndarray
    value: float


def element_thermal_load(grad_h0, F, D, T_nodes, geometry_factor):
    """Conduction load of one element, ``(n,)`` in W.

    ``grad_h0`` is ``(3, n)``; ``geometry_factor`` is ``V0`` for T4 and
    ``8 det(J0)`` for H8.
    """
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if not J > 0:
        raise ValueError("deformation gradient is singular or inverted")
    B = np.asarray(grad_h0).T @ np.linalg.inv(F)  # (n, 3) spatial gradients
    return geometry_factor * J * (B @ np.asarray(D) @ B.T) @ np.asarray(T_nodes, dtype=float)


def element_conductivity(props: ThermalProps, T, conn, temperature_dependent: bool):
    """Per-element conductivity tensors ``(E, 3, 3)``.

    With temperature dependence the table is read at the element-mean
    temperature; otherwise at ``props.reference_temperature``.
    """
    if temperature_dependent:
        return props.conductivity_tensor(T[conn].mean(axis=1))
    k = props.conductivity_tensor(props.reference_temperature)
    return np.ascontiguousarray(np.broadcast_to(k, (len(conn), 3, 3)))


def assemble_thermal_loads(pre, F, D, T, backend=None, workers: int = 1) -> np.ndarray:
    """Element conduction loads gathered to nodes (W)."""
    k = backend or _kernels.default
    mesh = pre.mesh
    loads = k.thermal_element_loads(mesh.elements, pre.grad_h0, pre.ref_volume, F, D, T, workers)
    return k.gather(pre.adjacency_ptr, pre.adjacency_slot, loads.reshape(-1), mesh.n_nodes, workers)


def thermal_mass(props: ThermalProps, node_volume, T, temperature_dependent: bool):
    if temperature_dependent:
        c = props.specific_heat_at(T)
    else:
        c = props.specific_heat_at(props.reference_temperature)
    return props.density * c * node_volume


def step_temperature(
    state: ThermalState,
    loads,
    props: ThermalProps,
    node_volume,
    dt: float,
    source_power=None,
    fixed: tuple[FixedTemperature, ...] | list = (),
    temperature_dependent: bool = False,
    thermal_mass_diag=None,
) -> ThermalState:
    """Forward-Euler nodal update.

    ``T+ = T + dt/C (-f_cond - w_b c_b V (T - T_a) + Q_m V + Q_r)``; fixed
    temperatures are written after the update. ``thermal_mass_diag`` may be
    passed to reuse a precomputed ``C`` when properties are temperature
    independent.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    T = state.temperatures
    if thermal_mass_diag is None:
        thermal_mass_diag = thermal_mass(props, node_volume, T, temperature_dependent)
    if np.any(thermal_mass_diag <= 0):
        raise ValueError("nonpositive lumped thermal mass")
    rhs = -np.asarray(loads)
    if props.perfusion_coefficient:
        rhs = rhs - props.perfusion_coefficient * node_volume * (T - props.arterial_temperature)
    if props.metabolic_rate:
        rhs = rhs + props.metabolic_rate * node_volume
    if source_power is not None:
        rhs = rhs + source_power
    T_new = T + dt * rhs / thermal_mass_diag
    for bc in fixed:
        T_new[bc.nodes] = bc.value
    return replace(state, temperatures=T_new, time=state.time + dt)
