"""Optimization over bounded-rank matrices through the desingularization
{(X, P) : XP = 0, P a rank-(n - r) orthogonal projector}."""

__version__ = "0.1.0"

from .calculus import (
    CostModel,
    OptimalityReport,
    hessian_norm_bound,
    hessian_vec,
    optimality_report,
    riemannian_gradient,
)
from .costs import (
    CompletionCost,
    CompletionProblem,
    QuadraticCost,
    SparseMask,
    completion_grad_products,
    completion_hess_products,
    completion_value,
    generate_problem,
    load_problem,
    save_problem,
)
from .geometry import AmbientProducts, inner, norm, normal_basis_sample, project, sfactor
from .manifold import (
    AmbientVector,
    ManifoldDims,
    ManifoldPoint,
    TangentVector,
    from_dense,
    from_factors,
    random_point,
    random_tangent,
    tangent_from_ambient_parts,
    tangent_to_ambient,
    to_dense,
)
from .retractions import (
    EigGapWarning,
    RetractionKind,
    intrinsic_acceleration_residual,
    retract,
    retract_metric_projection,
    retract_polar,
    retract_qfactor,
)
from .solvers import (
    DesingularizationGeometry,
    FixedRankGeometry,
    LRGeometry,
    SolverConfig,
    SolverTrace,
    gradient_descent,
    trust_region,
)
