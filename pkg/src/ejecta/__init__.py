"""Two-dimensional gas-particle flow on moving polygonal meshes.

Cell-centred finite volumes with a vertex-based contact solver drive the gas;
Lagrangian particles exchange momentum and heat with their host cells.
"""

from .cases import CASES, build_case, make_case
from .mesh import Mesh, build_mesh, rectangle_mesh
from .particles import ParticleSet
from .solver import SimulationState, Solver, SolverOptions, run
from .state import GasModel

__all__ = ["CASES", "GasModel", "Mesh", "ParticleSet", "SimulationState", "Solver",
           "SolverOptions", "build_case", "build_mesh", "make_case", "rectangle_mesh", "run"]
__version__ = "0.1.0"
