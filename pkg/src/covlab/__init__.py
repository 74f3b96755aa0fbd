"""Perturbations of quantum dynamical semigroups by covariant measures, on a grid."""

from covlab.errors import (
    AlignmentError,
    CapacityError,
    ConfigError,
    CovlabError,
    DomainError,
    IntegrationError,
    SeriesDivergenceError,
    SpecMismatchError,
    UnsupportedOperationError,
)
from covlab.grid import GridFunction, GridOperator, GridSpec, heat_op, indicator, inner_product, shift_op
from covlab.semigroup import SemigroupFamily, check_semigroup_law, heat_family, left_shift_family, right_shift_family, semigroup_at
from covlab.dynamics import DensityOperator, SuperOperatorFamily, gksl_evolve, lindblad_apply, no_event_family
from covlab.measures import (
    OperatorMeasure,
    boundary_injection_measure,
    bounded_density_measure,
    check_covariance,
    generator_density_measure,
    jump_measure,
    singular_rank_one_measure,
)
from covlab.volterra import (
    PerturbedFamily,
    TimeGrid,
    dyson_series,
    march_perturbed,
    reconstruct_base,
    reconstruct_initial_state,
    scalar_volterra_rank_one,
)

__version__ = "0.1.0"
