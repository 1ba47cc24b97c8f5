"""Reference material sets used by the demos, verification cases and benchmarks."""
from __future__ import annotations

from .materials import (
    ExpansionSpec,
    HyperelasticParams,
    MaterialModel,
    PronySeries,
    PropertyTable,
    ThermalProps,
)

# E = 3500 Pa, nu = 0.47
SOFT_TISSUE_MU = 1190.476
SOFT_TISSUE_KAPPA = 19444.444

LIVER_SOURCE_POWER = 9705360.0  # W/m^3, rho * SAR
LIVER_METABOLIC_RATE = 33800.0  # W/m^3


def soft_tissue(alpha: float = 0.1) -> MaterialModel:
    """Isotropic neo-Hookean tissue with constant thermal properties."""
    thermal = ThermalProps(
        density=1060.0,
        specific_heat=PropertyTable.constant(3700.0),
        conductivity=PropertyTable.constant(0.518),
    )
    return MaterialModel(
        HyperelasticParams(SOFT_TISSUE_MU, SOFT_TISSUE_KAPPA),
        thermal,
        expansion=ExpansionSpec("isotropic", (alpha,)),
    )


def liver(anisotropic: bool = True, viscous: bool = True, perfusion: bool = True) -> MaterialModel:
    """Liver tissue: temperature-dependent c and k, fiber along x, one Prony term."""
    thermal = ThermalProps(
        density=1060.0,
        specific_heat=PropertyTable((37.0, 90.0), (3600.0, 4300.0)),
        conductivity=PropertyTable((37.0, 90.0), (0.53, 0.75)),
        perfusion_rate=26.6 if perfusion else 0.0,
        blood_specific_heat=3617.0 if perfusion else 0.0,
        arterial_temperature=37.0,
        metabolic_rate=LIVER_METABOLIC_RATE,
    )
    eta = 2.0 * SOFT_TISSUE_MU if anisotropic else 0.0
    return MaterialModel(
        HyperelasticParams(SOFT_TISSUE_MU, SOFT_TISSUE_KAPPA, eta),
        thermal,
        prony=PronySeries(((0.5, 0.58),) if viscous else ()),
        expansion=ExpansionSpec("isotropic", (1e-4,)),
        fiber=(1.0, 0.0, 0.0) if anisotropic else None,
    )
