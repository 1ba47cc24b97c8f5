"""Constitutive layer.

Neo-Hookean strain energy (isotropic and transversely isotropic) with its
second Piola-Kirchhoff stress, the thermal deformation gradient used by the
multiplicative split ``F = F_elas @ F_ther``, the Prony-series stress
recurrence, and piecewise-linear temperature-dependent property tables.

All tensor functions accept a single 3x3 tensor or a stack ``(..., 3, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MaterialError",
    "HyperelasticParams",
    "PronySeries",
    "PropertyTable",
    "ThermalProps",
    "ExpansionSpec",
    "MaterialModel",
    "strain_energy",
    "pk2_stress",
    "thermal_deformation_gradient",
    "total_pk2_stress",
    "prony_update",
    "relaxation_function",
    "interp_property",
]

_EYE = np.eye(3)


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class HyperelasticParams:
    mu: float
    kappa: float
    eta_a: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise MaterialError(f"shear modulus must be positive, got {self.mu}")
        if not self.kappa > 0:
            raise MaterialError(f"bulk modulus must be positive, got {self.kappa}")
        if not self.eta_a >= 0:
            raise MaterialError(f"anisotropy coefficient must be >= 0, got {self.eta_a}")

    @property
    def anisotropic(self) -> bool:
        return self.eta_a > 0


@dataclass(frozen=True)
class PronySeries:
    """Generalised Maxwell relaxation terms ``(phi_i, tau_i)``.

    ``phi_inf`` is derived from the normalisation ``phi_inf + sum(phi_i) = 1``
    when not given, so the instantaneous response equals the hyperelastic one.
    """

    terms: tuple[tuple[float, float], ...] = ()
    phi_inf: float | None = None

    def __post_init__(self):
        terms = tuple((float(p), float(t)) for p, t in self.terms)
        object.__setattr__(self, "terms", terms)
        for phi, tau in terms:
            if not (phi > 0 and tau > 0):
                raise MaterialError(f"Prony term ({phi}, {tau}) must have phi > 0 and tau > 0")
        derived = 1.0 - sum(p for p, _ in terms)
        if self.phi_inf is None:
            object.__setattr__(self, "phi_inf", derived)
        elif abs(self.phi_inf - derived) > 1e-12:
            raise MaterialError(
                f"phi_inf + sum(phi_i) must equal 1 (got {self.phi_inf} + {1 - derived})"
            )
        if not self.phi_inf > 0:
            raise MaterialError(f"phi_inf must be positive, got {self.phi_inf}")

    def __len__(self):
        return len(self.terms)

    @property
    def phis(self) -> np.ndarray:
        return np.array([p for p, _ in self.terms], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return np.array([t for _, t in self.terms], dtype=float)

    def coefficients(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(a_i, b_i)`` with ``theta_i = a_i*S + b_i*theta_i_prev``."""
        phis, taus = self.phis, self.taus
        return dt * phis / (dt + taus), taus / (dt + taus)


@dataclass(frozen=True)
class PropertyTable:
    """Piecewise-linear table of a property versus temperature (deg C).

    Values may be scalars or 3x3 tensors (anisotropic conductivity).
    Evaluation clamps to the end values outside the tabulated range.
    """

    temperatures: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        temps = np.atleast_1d(np.asarray(self.temperatures, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if temps.size == 0:
            raise MaterialError("property table is empty")
        if vals.ndim == 0:
            vals = vals.reshape(1)
        if vals.shape[0] != temps.size or vals.ndim not in (1, 3):
            raise MaterialError("property table values must be (K,) or (K, 3, 3)")
        if np.any(np.diff(temps) <= 0):
            raise MaterialError("property table temperatures must be strictly increasing")
        if vals.ndim == 1:
            if np.any(vals <= 0):
                raise MaterialError("property table values must be positive")
        else:
            if not np.allclose(vals, np.swapaxes(vals, 1, 2), atol=1e-14):
                raise MaterialError("conductivity tensors must be symmetric")
            if np.any(np.linalg.eigvalsh(vals) <= 0):
                raise MaterialError("conductivity tensors must be positive definite")
        temps.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "temperatures", temps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value) -> "PropertyTable":
        return cls(np.array([0.0]), np.asarray(value, dtype=float)[None, ...])

    @property
    def is_tensor(self) -> bool:
        return self.values.ndim == 3

    @property
    def is_constant(self) -> bool:
        return self.temperatures.size == 1

    def __call__(self, T):
        return interp_property(self, T)

    def __eq__(self, other):
        if not isinstance(other, PropertyTable):
            return NotImplemented
        return np.array_equal(self.temperatures, other.temperatures) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.temperatures.tobytes(), self.values.tobytes()))


def interp_property(table: PropertyTable, T):
    """Linear interpolation in ``table`` at temperature(s) ``T``, clamped at the ends."""
    temps, vals = table.temperatures, table.values
    T = np.asarray(T, dtype=float)
    if vals.ndim == 1:
        out = np.interp(T, temps, vals)
        return float(out) if out.ndim == 0 else out
    # tensor entries: interpolate each component
    flat = vals.reshape(len(temps), 9)
    out = np.stack([np.interp(T, temps, flat[:, k]) for k in range(9)], axis=-1)
    return out.reshape(T.shape + (3, 3))


@dataclass(frozen=True)
class ThermalProps:
    density: float
    specific_heat: PropertyTable
    conductivity: PropertyTable
    perfusion_rate: float = 0.0
    blood_specific_heat: float = 0.0
    arterial_temperature: float = 37.0
    metabolic_rate: float = 0.0
    reference_temperature: float = 37.0

    def __post_init__(self):
        if not self.density > 0:
            raise MaterialError(f"density must be positive, got {self.density}")
        if self.specific_heat.is_tensor:
            raise MaterialError("specific heat must be scalar")
        if self.perfusion_rate < 0 or self.blood_specific_heat < 0:
            raise MaterialError("perfusion parameters must be nonnegative")

    @property
    def perfusion_coefficient(self) -> float:
        """``w_b * c_b`` in W/(m^3 degC)."""
        return self.perfusion_rate * self.blood_specific_heat

    def specific_heat_at(self, T):
        return interp_property(self.specific_heat, T)

    def conductivity_tensor(self, T):
        """Conductivity as ``(..., 3, 3)`` tensors at temperature(s) ``T``."""
        k = interp_property(self.conductivity, T)
        if self.conductivity.is_tensor:
            return k
        return np.asarray(k)[..., None, None] * _EYE

    def max_conductivity(self) -> float:
        vals = self.conductivity.values
        if vals.ndim == 1:
            return float(vals.max())
        return float(np.linalg.eigvalsh(vals).max())

    def min_specific_heat(self) -> float:
        return float(self.specific_heat.values.min())


EXPANSION_KINDS = {"isotropic": 1, "transversely_isotropic": 2, "orthotropic": 3}


@dataclass(frozen=True)
class ExpansionSpec:
    """Thermal expansion: kind, coefficients ``(alpha_i, alpha_m, alpha_n)`` and reference T.

    ``alpha_i`` acts on the direction(s) not covered by the axes ``m``/``n``.
    """

    kind: str = "isotropic"
    alphas: tuple[float, ...] = (0.0,)
    reference_temperature: float = 37.0

    def __post_init__(self):
        if self.kind not in EXPANSION_KINDS:
            raise MaterialError(f"unknown expansion kind {self.kind!r}")
        n = EXPANSION_KINDS[self.kind]
        alphas = tuple(float(a) for a in self.alphas)
        if len(alphas) != n:
            raise MaterialError(f"{self.kind} expansion takes {n} coefficient(s), got {len(alphas)}")
        if not np.isfinite(self.reference_temperature):
            raise MaterialError("expansion reference temperature must be finite")
        object.__setattr__(self, "alphas", alphas)

    @property
    def is_null(self) -> bool:
        return all(a == 0.0 for a in self.alphas)


@dataclass(frozen=True)
class MaterialModel:
    hyperelastic: HyperelasticParams
    thermal: ThermalProps
    prony: PronySeries = field(default_factory=PronySeries)
    expansion: ExpansionSpec = field(default_factory=ExpansionSpec)
    fiber: tuple[float, float, float] | None = None
    axes: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    @property
    def density(self) -> float:
        return self.thermal.density


def _as_fiber(fiber) -> np.ndarray | None:
    if fiber is None:
        return None
    a = np.asarray(fiber, dtype=float)
    return a


def _check_spd(C: np.ndarray) -> None:
    if not np.allclose(C, np.swapaxes(C, -1, -2), rtol=1e-10, atol=1e-12):
        raise MaterialError("right Cauchy-Green tensor is not symmetric")
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        raise MaterialError("right Cauchy-Green tensor is not positive definite") from None


def _fiber_required(params: HyperelasticParams, fiber) -> None:
    if params.anisotropic and fiber is None:
        raise MaterialError("a fiber direction is required when eta_a > 0")


def strain_energy(C, params: HyperelasticParams, fiber=None, check: bool = True):
    """Neo-Hookean energy density ``mu/2 (I1b-3) + eta_a/2 (I4b-1)^2 + kappa/2 (J-1)^2``."""
    C = np.asarray(C, dtype=float)
    _fiber_required(params, fiber)
    if check:
        _check_spd(C)
    J = np.sqrt(np.linalg.det(C))
    scale = J ** (-2.0 / 3.0)
    I1b = scale * np.trace(C, axis1=-2, axis2=-1)
    psi = 0.5 * params.mu * (I1b - 3.0) + 0.5 * params.kappa * (J - 1.0) ** 2
    if params.anisotropic:
        a = _as_fiber(fiber)
        I4b = scale * np.einsum("...i,...ij,...j->...", a, C, a)
        psi = psi + 0.5 * params.eta_a * (I4b - 1.0) ** 2
    return psi


def pk2_stress(C, params: HyperelasticParams, fiber=None, check: bool = True):
    """Second Piola-Kirchhoff stress ``S = 2 dPsi/dC``."""
    C = np.asarray(C, dtype=float)
    _fiber_required(params, fiber)
    if check:
        _check_spd(C)
    Cinv = np.linalg.inv(C)
    J = np.sqrt(np.linalg.det(C))
    scale = J ** (-2.0 / 3.0)
    trC = np.trace(C, axis1=-2, axis2=-1)
    S = params.mu * scale[..., None, None] * (_EYE - (trC / 3.0)[..., None, None] * Cinv)
    S = S + (params.kappa * (J - 1.0) * J)[..., None, None] * Cinv
    if params.anisotropic:
        a = np.broadcast_to(_as_fiber(fiber), C.shape[:-1])
        I4 = np.einsum("...i,...ij,...j->...", a, C, a)
        coef = 2.0 * params.eta_a * (scale * I4 - 1.0) * scale
        aa = np.einsum("...i,...j->...ij", a, a)
        S = S + coef[..., None, None] * (aa - (I4 / 3.0)[..., None, None] * Cinv)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def thermal_deformation_gradient(T, spec: ExpansionSpec, axes=None):
    """Stress-free thermal deformation gradient at temperature(s) ``T``.

    ``axes`` is ``(m, n)`` (each ``(3,)`` or ``(..., 3)``); ``m`` is used by the
    transversely isotropic kind, both by the orthotropic kind.
    """
    T = np.asarray(T, dtype=float)
    dT = T - spec.reference_temperature
    lams = [1.0 + a * dT for a in spec.alphas]
    Fth = lams[0][..., None, None] * _EYE
    if spec.kind == "isotropic":
        return Fth
    if axes is None:
        raise MaterialError(f"{spec.kind} expansion needs principal axes")
    m = np.asarray(axes[0], dtype=float)
    _check_unit(m, "m")
    Fth = Fth + (lams[1] - lams[0])[..., None, None] * np.einsum("...i,...j->...ij", m, m)
    if spec.kind == "orthotropic":
        n = np.asarray(axes[1], dtype=float)
        _check_unit(n, "n")
        if np.any(np.abs(np.einsum("...i,...i->...", m, n)) > 1e-6):
            raise MaterialError("expansion axes m and n are not orthogonal")
        Fth = Fth + (lams[2] - lams[0])[..., None, None] * np.einsum("...i,...j->...ij", n, n)
    return Fth


def _check_unit(v: np.ndarray, name: str) -> None:
    if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-6):
        raise MaterialError(f"expansion axis {name} is not a unit vector")


def total_pk2_stress(F, F_ther, params: HyperelasticParams, fiber=None):
    """Total PK2 stress in the reference configuration under ``F = F_elas @ F_ther``.

    The intermediate-configuration stress is evaluated at ``C_elas`` and pulled
    back with ``det(F_ther) F_ther^-1 S F_ther^-T``. ``F_ther=None`` means identity.
    """
    F = np.asarray(F, dtype=float)
    if F_ther is None:
        return pk2_stress(np.swapaxes(F, -1, -2) @ F, params, fiber, check=False)
    F_ther = np.asarray(F_ther, dtype=float)
    det_th = np.linalg.det(F_ther)
    if np.any(det_th <= 0):
        raise MaterialError("thermal deformation gradient is singular or inverted")
    Fth_inv = np.linalg.inv(F_ther)
    Fe = F @ Fth_inv
    S_int = pk2_stress(np.swapaxes(Fe, -1, -2) @ Fe, params, fiber, check=False)
    S = det_th[..., None, None] * (Fth_inv @ S_int @ np.swapaxes(Fth_inv, -1, -2))
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def prony_update(S, history, dt: float, prony: PronySeries):
    """One step of the viscous recurrence.

    ``history`` has one tensor per Prony term on its first axis. Returns
    ``(S_tilde, new_history)`` with ``S_tilde = S - sum(theta_i)``.
    """
    S = np.asarray(S, dtype=float)
    history = np.asarray(history, dtype=float)
    if history.shape[0] != len(prony):
        raise MaterialError(
            f"viscous history has {history.shape[0]} terms, Prony series has {len(prony)}"
        )
    if len(prony) == 0:
        return S.copy(), history.copy()
    a, b = prony.coefficients(dt)
    shape = (-1,) + (1,) * S.ndim
    new = a.reshape(shape) * S + b.reshape(shape) * history
    return S - new.sum(axis=0), new


def relaxation_function(t, prony: PronySeries):
    """``phi(t) = phi_inf + sum phi_i exp(-t/tau_i)``."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, prony.phi_inf)
    for phi, tau in prony.terms:
        out = out + phi * np.exp(-t / tau)
    return float(out) if out.ndim == 0 else out

