"""Supremal functionals on grids: pseudo-distances, relaxation and level-convex envelopes."""

from .distance import (
    distance_matrix,
    pseudo_distance_fast,
    pseudo_distance_lp,
    pseudo_distance_oracle,
    sandwich_check,
    search_lower_bound,
)
from .domain import (
    DomainError,
    GridDomain,
    build_domain,
    estimate_domain_constant,
    geodesic_distance,
    stencil_anisotropy,
)
from .gridfunc import (
    GridFunction,
    discrete_gradient,
    lipschitz_seminorms,
    mcshane_extend,
    sawtooth,
    supremal_value,
)
from .relaxation import (
    coercive_approximation,
    difference_quotient,
    level_convexity_test,
    meet_locality,
    monotone_gamma_limit,
    relax_value,
)
from .representation import localized_relaxed_supremand, representation_supremand, representation_table
from .scenario import list_builtins, run_scenario
from .supremand import Supremand, SupremandError

__version__ = "0.1.0"
