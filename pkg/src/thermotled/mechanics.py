"""Explicit total-Lagrangian mechanics.

Element forces use the pulled-back total stress ``F S~ grad_h0 V0`` with the
thermal split and Prony history from :mod:`thermotled.materials`. H8 elements
get constant-stiffness hourglass forces projected on reference-cube base
vectors that are orthogonal to linear fields. Nodes advance by central
differences with mass-proportional damping.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels as _kernels
from .materials import MaterialModel, PronySeries, prony_update, strain_energy, total_pk2_stress
from .mesh import hourglass_scale

__all__ = [
    "MechState",
    "Prescribed",
    "MechBCs",
    "deformation_gradient",
    "element_internal_force",
    "hourglass_force",
    "assemble_internal_forces",
    "step_displacement",
    "kinetic_energy",
    "strain_energy_total",
]


@dataclass
class MechState:
    disp: np.ndarray
    disp_prev: np.ndarray
    viscous: np.ndarray  # (E, P, 3, 3)

    @classmethod
    def at_rest(cls, n_nodes: int, n_elements: int, n_prony: int = 0) -> "MechState":
        return cls(
            np.zeros((n_nodes, 3)),
            np.zeros((n_nodes, 3)),
            np.zeros((n_elements, n_prony, 3, 3)),
        )

    def copy(self) -> "MechState":
        return MechState(self.disp.copy(), self.disp_prev.copy(), self.viscous.copy())


@dataclass(frozen=True, eq=False)
class Prescribed:
    """Target ``value`` (m) on ``component`` of ``nodes``, ramped linearly over ``ramp_time``.

    ``ramp_time`` of ``None`` means "over the whole run" and is resolved by the
    engine; zero applies the value as a step.
    """

    nodes: np.ndarray
    component: int
    value: float
    ramp_time: float | None = None

    def __post_init__(self):
        if self.component not in (0, 1, 2):
            raise ValueError("prescribed component must be 0, 1 or 2")
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.int64))

    def target(self, t: float) -> float:
        if not self.ramp_time:
            return self.value
        return self.value * min(t / self.ramp_time, 1.0)


@dataclass
class MechBCs:
    """Mechanical boundary data.

    ``motion`` is an optional callable ``motion(t) -> (N, 3)`` giving a full
    displacement field for the nodes in ``motion_nodes``; it is used to impose
    rigid motions in verification runs.
    """

    fixed_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    prescribed: list[Prescribed] = field(default_factory=list)
    external_forces: np.ndarray | None = None
    body_force: np.ndarray | None = None
    motion: Callable[[float], np.ndarray] | None = None
    motion_nodes: np.ndarray | None = None

    def __post_init__(self):
        self.fixed_nodes = np.asarray(self.fixed_nodes, dtype=np.int64)
        fixed = set(self.fixed_nodes.tolist())
        seen: set[tuple[int, int]] = set()
        for p in self.prescribed:
            for node in p.nodes.tolist():
                if node in fixed:
                    raise ValueError(f"node {node + 1} is both fixed and prescribed")
                key = (node, p.component)
                if key in seen:
                    raise ValueError(
                        f"node {node + 1} component {p.component} is prescribed twice"
                    )
                seen.add(key)
        if self.body_force is not None:
            self.body_force = np.asarray(self.body_force, dtype=float).reshape(3)

    def with_ramp(self, ramp_time: float) -> "MechBCs":
        """Copy with unset ramp times replaced by ``ramp_time``."""
        pres = [
            p if p.ramp_time is not None else replace(p, ramp_time=ramp_time)
            for p in self.prescribed
        ]
        return replace(self, prescribed=pres)

    def load_vector(self, n_nodes: int, node_volume) -> np.ndarray:
        R = np.zeros((n_nodes, 3))
        if self.external_forces is not None:
            R += self.external_forces
        if self.body_force is not None:
            R += np.outer(node_volume, self.body_force)
        return R

    def apply(self, disp: np.ndarray, t: float) -> None:
        """Overwrite constrained DOFs of ``disp`` with their values at ``t``."""
        if self.motion is not None:
            nodes = self.motion_nodes if self.motion_nodes is not None else slice(None)
            disp[nodes] = np.asarray(self.motion(t))[nodes]
        disp[self.fixed_nodes] = 0.0
        for p in self.prescribed:
            disp[p.nodes, p.component] = p.target(t)

    @property
    def is_empty(self) -> bool:
        return (
            not len(self.fixed_nodes)
            and not self.prescribed
            and self.external_forces is None
            and self.body_force is None
            and self.motion is None
        )


def deformation_gradient(u_e, grad_h0):
    """``F = I + u_e^T grad_h0^T`` for one element; ``u_e`` is ``(n, 3)``, ``grad_h0`` ``(3, n)``."""
    return np.eye(3) + np.asarray(u_e, dtype=float).T @ np.asarray(grad_h0, dtype=float).T


def element_internal_force(
    F,
    grad_h0,
    geometry_factor: float,
    material: MaterialModel,
    fiber=None,
    F_ther=None,
    viscous=None,
    dt: float | None = None,
):
    """Nodal forces ``(n, 3)`` of one element and its updated viscous history.

    ``viscous`` is ``(P, 3, 3)`` with ``P`` the number of Prony terms; pass
    ``None`` when the material is purely elastic.
    """
    F = np.asarray(F, dtype=float)
    if not np.linalg.det(F) > 0:
        raise ValueError("deformation gradient is singular or inverted")
    if F_ther is not None and not abs(np.linalg.det(F_ther)) > 0:
        raise ValueError("thermal deformation gradient is singular")
    fib = fiber if material.hyperelastic.anisotropic else None
    S = total_pk2_stress(F, F_ther, material.hyperelastic, fib)
    new_hist = viscous
    if len(material.prony):
        if dt is None:
            raise ValueError("dt is required with viscous terms")
        if viscous is None:
            viscous = np.zeros((len(material.prony), 3, 3))
        S, new_hist = prony_update(S, viscous, dt, material.prony)
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("non-finite stress")
    P = F @ S
    return geometry_factor * (P @ np.asarray(grad_h0)).T, new_hist


def hourglass_force(gamma, u_e, stiffness: float):
    """Hourglass forces ``(8, 3)`` for one H8 element.

    ``gamma`` holds the four hourglass vectors ``(4, 8)`` (orthogonal to linear
    fields, see :func:`thermotled.mesh.hourglass_vectors`); ``stiffness`` is
    the element scale ``k`` from :func:`thermotled.mesh.hourglass_scale`.
    """
    gamma = np.asarray(gamma, dtype=float)
    proj = gamma @ np.asarray(u_e, dtype=float)  # (4, 3)
    return stiffness * gamma.T @ proj


def hourglass_stiffness(pre, material: MaterialModel, kappa_hg: float):
    """Per-element hourglass scale, or ``None`` for T4 or ``kappa_hg == 0``."""
    if pre.hourglass is None or kappa_hg == 0:
        return None
    return hourglass_scale(kappa_hg, material.hyperelastic.mu, pre.ref_volume)


def assemble_internal_forces(
    pre,
    F,
    material: MaterialModel,
    viscous,
    dt: float,
    disp,
    F_ther=None,
    hg_k=None,
    backend=None,
    workers: int = 1,
    fibers=None,
) -> np.ndarray:
    """Element internal forces gathered to nodes ``(N, 3)``; ``viscous`` updated in place.

    ``fibers`` are per-element unit vectors ``(E, 3)``; when omitted the mesh
    fiber table is used.
    """
    k = backend or _kernels.default
    mesh = pre.mesh
    hp = material.hyperelastic
    prony: PronySeries = material.prony
    if len(prony):
        pa, pb = prony.coefficients(dt)
    else:
        pa = pb = np.zeros(0)
    if not hp.anisotropic:
        fibers = None
    elif fibers is None:
        fibers = mesh.fiber_dirs
    if hp.anisotropic and fibers is None:
        raise ValueError("anisotropic material needs per-element fiber directions")
    hg = pre.hourglass if hg_k is not None else None
    f = k.element_forces(
        mesh.elements, pre.grad_h0, pre.ref_volume, F, F_ther, fibers,
        hp.mu, hp.kappa, hp.eta_a, np.asarray(pa, dtype=float), np.asarray(pb, dtype=float),
        viscous, hg, hg_k, disp, workers,
    )
    return k.gather(pre.adjacency_ptr, pre.adjacency_slot, f.reshape(-1, 3), mesh.n_nodes, workers)


def step_displacement(
    state: MechState,
    forces,
    bcs: MechBCs,
    mass,
    gamma: float,
    dt: float,
    t_next: float,
    loads=None,
) -> MechState:
    """Central-difference update with damping ``D = gamma M``.

    ``forces`` are assembled internal forces; ``loads`` the external vector
    ``R`` (defaults to zero). Constrained DOFs are written at ``t_next``.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    M = np.asarray(mass, dtype=float)[:, None]
    if np.any(M <= 0):
        raise ValueError("nonpositive lumped mass")
    u, u0 = state.disp, state.disp_prev
    m_dt2 = M / dt**2
    d_2dt = gamma * M / (2.0 * dt)
    rhs = -np.asarray(forces) + 2.0 * m_dt2 * u + (d_2dt - m_dt2) * u0
    if loads is not None:
        rhs += loads
    u_new = rhs / (d_2dt + m_dt2)
    bcs.apply(u_new, t_next)
    return MechState(u_new, u.copy(), state.viscous)


def kinetic_energy(state: MechState, mass, dt: float) -> float:
    """Kinetic energy from the backward-difference velocity."""
    v = (state.disp - state.disp_prev) / dt
    return 0.5 * float(np.sum(np.asarray(mass)[:, None] * v * v))


def strain_energy_total(pre, F, material: MaterialModel, F_ther=None) -> float:
    """Elastic strain energy of the mesh (J), one-point integrated."""
    if F_ther is not None:
        Fe = F @ np.linalg.inv(F_ther)
        scale = np.linalg.det(F_ther)
    else:
        Fe, scale = F, 1.0
    C = np.swapaxes(Fe, -1, -2) @ Fe
    fib = pre.mesh.fiber_dirs if material.hyperelastic.anisotropic else None
    W = strain_energy(C, material.hyperelastic, fib)
    return float(np.sum(W * scale * pre.ref_volume))
