"""Multimarginal optimal transport with repulsive pair costs on dyadic grids.

The package discretizes a probability density on a half-open dyadic grid,
solves the N-marginal coupling problem for Coulomb-type costs as a finite
LP with column generation, and audits the result: duality gap,
complementary slackness, exhaustive dual feasibility, diagonal clearance,
and an a priori sup-norm bound on the symmetrized dual potential.
"""

from .cost import CostModel, cell_cost_lower, coulomb, pointwise_cost, power_law
from .errors import (
    DimensionMismatch,
    EmptyRestriction,
    InsufficientSupport,
    MMOTError,
    NegativeWeight,
    NoOffDiagonalSupport,
    NormalizationError,
    NumericalBreakdown,
    OverlappingNeighborhoods,
    ParseError,
    PointOutsideWindow,
    SupportOutsideWindow,
    ZeroMass,
)
from .grid import GridSpec, cell_of, children, inf_dist, parent, sup_dist
from .harness import ConvergenceRow, ConvergenceTable, converge, swap_search
from .lp import (
    LPSolution,
    StandardLP,
    price_columns,
    solve_lp,
    solve_mmot,
    solve_transport,
)
from .measure import (
    DiscreteMeasure,
    FiniteAtomic,
    TruncatedGaussian,
    UniformBall,
    discretize,
    load_measure,
    renormalize,
    save_measure,
    support_cardinality,
)
from .transport import (
    DualityReport,
    PotentialVector,
    TransportPlan,
    diagonal_clearance,
    lemma_upper_bound,
    load_plan,
    load_potentials,
    plan_cost,
    potential_bound,
    product_plan,
    product_plan_cost,
    save_plan,
    save_potentials,
    swap_improve,
    symmetrize_potentials,
    verify_duality,
)

__version__ = "0.1.0"

__all__ = [
    "CostModel",
    "ConvergenceRow",
    "ConvergenceTable",
    "DimensionMismatch",
    "DiscreteMeasure",
    "DualityReport",
    "EmptyRestriction",
    "FiniteAtomic",
    "GridSpec",
    "InsufficientSupport",
    "LPSolution",
    "MMOTError",
    "NegativeWeight",
    "NoOffDiagonalSupport",
    "NormalizationError",
    "NumericalBreakdown",
    "OverlappingNeighborhoods",
    "ParseError",
    "PointOutsideWindow",
    "PotentialVector",
    "StandardLP",
    "SupportOutsideWindow",
    "TransportPlan",
    "TruncatedGaussian",
    "UniformBall",
    "ZeroMass",
    "cell_cost_lower",
    "cell_of",
    "children",
    "converge",
    "coulomb",
    "diagonal_clearance",
    "discretize",
    "inf_dist",
    "lemma_upper_bound",
    "load_measure",
    "load_plan",
    "load_potentials",
    "parent",
    "plan_cost",
    "pointwise_cost",
    "potential_bound",
    "power_law",
    "price_columns",
    "product_plan",
    "product_plan_cost",
    "renormalize",
    "save_measure",
    "save_plan",
    "save_potentials",
    "solve_lp",
    "solve_mmot",
    "solve_transport",
    "sup_dist",
    "support_cardinality",
    "swap_improve",
    "swap_search",
    "symmetrize_potentials",
    "verify_duality",
]
