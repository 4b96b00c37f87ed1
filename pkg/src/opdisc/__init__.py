"""Numerical laboratory for discretizing monotone operator layers on L2(0,1)."""

from .decompose import DecompositionResult, decompose
from .discretize import DiscretizedMap, convergence_scan
from .galerkin import (
    ConvexNonlinearity,
    FemMesh,
    fem_convergence,
    galerkin_path_matrix,
    singularity_scan,
    solve_semilinear,
)
from .invert import block_fixed_point, chain_inverse, global_inverse_check, invert_chain
from .layers import (
    CoordinateNetwork,
    FiniteRankOperator,
    InvertibleResidualChain,
    NeuralOperatorLayer,
    ResidualChain,
    make_layer,
)
from .monotone import bilipschitz_estimate, pairwise_alpha
from .spectral import BasisSpec, Space, SpectralVector, Subspace, inner, project

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "ConvexNonlinearity",
    "CoordinateNetwork",
    "DecompositionResult",
    "DiscretizedMap",
    "FemMesh",
    "FiniteRankOperator",
    "InvertibleResidualChain",
    "NeuralOperatorLayer",
    "ResidualChain",
    "Space",
    "SpectralVector",
    "Subspace",
    "bilipschitz_estimate",
    "block_fixed_point",
    "chain_inverse",
    "convergence_scan",
    "decompose",
    "fem_convergence",
    "galerkin_path_matrix",
    "global_inverse_check",
    "inner",
    "invert_chain",
    "make_layer",
    "pairwise_alpha",
    "project",
    "singularity_scan",
    "solve_semilinear",
    "__version__",
]
