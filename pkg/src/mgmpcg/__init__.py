"""Additive multigrid as a multipreconditioner for conjugate gradients.

The package bundles the pieces needed to compare additive-MG-MPCG against
additive-MG-PCG and V-cycle-PCG on two model diffusion problems:

* :mod:`mgmpcg.sparse` -- CSR kernels, Galerkin products, Gram solves
* :mod:`mgmpcg.fem` -- Q1 assembly on the unit square, fracture rasterization
* :mod:`mgmpcg.hierarchy` -- geometric and aggregation level hierarchies
* :mod:`mgmpcg.smoothers` -- SSOR smoothing and the coarse direct solve
* :mod:`mgmpcg.preconditioners` -- additive block/sum and the V-cycle
* :mod:`mgmpcg.krylov` -- PCG and the multipreconditioned CG solver
* :mod:`mgmpcg.experiments` -- experiment drivers, artifacts, sweeps
"""

from .sparse import CsrMatrix, GramFactor, gram_solve, galerkin_triple_product
from .fem import (
    BoundarySpec,
    DiffusionField,
    Dirichlet,
    FractureNetwork,
    Neumann,
    StructuredGrid,
    assemble,
    element_stiffness,
    rasterize_fractures,
)
from .hierarchy import (
    Level,
    LevelHierarchy,
    bilinear_prolongation,
    build_aggregation_hierarchy,
    build_geometric_hierarchy,
)
from .smoothers import CoarseSolver, SsorSmoother
from .preconditioners import AdditiveMg, VCycle
from .krylov import (
    IndefiniteOperatorError,
    MpcgHistory,
    SolveReport,
    SolverConfig,
    mpcg,
    pcg,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveMg",
    "BoundarySpec",
    "CoarseSolver",
    "CsrMatrix",
    "DiffusionField",
    "Dirichlet",
    "FractureNetwork",
    "GramFactor",
    "IndefiniteOperatorError",
    "Level",
    "LevelHierarchy",
    "MpcgHistory",
    "Neumann",
    "SolveReport",
    "SolverConfig",
    "SsorSmoother",
    "StructuredGrid",
    "VCycle",
    "assemble",
    "bilinear_prolongation",
    "build_aggregation_hierarchy",
    "build_geometric_hierarchy",
    "element_stiffness",
    "galerkin_triple_product",
    "gram_solve",
    "mpcg",
    "pcg",
    "rasterize_fractures",
]
