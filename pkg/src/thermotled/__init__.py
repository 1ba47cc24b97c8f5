"""Explicit total-Lagrangian thermo-visco-elastic soft tissue solver.

Couples Pennes bioheat transfer with finite-strain neo-Hookean mechanics,
multiplicative thermal expansion and Prony-series viscoelasticity on T4 and
H8 meshes.
"""
from .engine import ConfigError, InstabilityError, Problem, Simulation, SimulationConfig
from .materials import MaterialModel
from .mesh import Mesh, box_mesh, load_mesh, read_mesh

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "InstabilityError",
    "MaterialModel",
    "Mesh",
    "Problem",
    "Simulation",
    "SimulationConfig",
    "box_mesh",
    "load_mesh",
    "read_mesh",
]
