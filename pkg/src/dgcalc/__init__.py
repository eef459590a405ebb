"""Discrete calculus on discontinuous Galerkin spaces."""
from .basis import (
    QuadratureRule,
    ReferenceBasis,
    edge_quadrature,
    reference_mass_matrix,
    volume_quadrature,
)
from .calculus import (
    LocalOperatorSet,
    PenaltyConfig,
    Side,
    curl2d,
    discrete_partial,
    divergence,
    gradient,
    hessian,
    laplacian,
    lifting,
    local_derivative_matrices,
    trace_Q,
)
from .errors import ConvergenceError, DGError, EvaluationError, SingularSystemError
from .field import (
    DGField,
    MatrixField,
    VectorField,
    broken_h1_error,
    edge_traces,
    l2_error,
    project,
    project_vector,
)
from .mesh import Mesh, build_cartesian, build_triangulated, uniform_refine, validate

__version__ = "0.1.0"
