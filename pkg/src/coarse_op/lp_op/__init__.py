from coarse_op.lp_op.commut import (
    CommutBound,
    commut_bound_band,
    commut_search,
    commutator,
    commutator_norm,
    lipschitz_for_commut,
    tent,
)
from coarse_op.lp_op.generators import (
    ContractionError,
    geometric_envelope,
    multiplication_operator,
    neumann_quasilocal,
    normalized,
    partial_translation_operator,
    random_band,
    residual_norm,
    shift_operator,
    tridiagonal,
)
from coarse_op.lp_op.norms import NormEstimate, interpolation_bound, matrix_norm, opnorm, vector_norm
from coarse_op.lp_op.operator import (
    LpOperator,
    OperatorMismatch,
    ScalarFunction,
    add,
    apply,
    band_truncate,
    compose,
    conjugate,
    multiply_left,
    multiply_right,
    off_band,
    parse_p,
    propagation,
    scale,
)
from coarse_op.lp_op.profile import (
    CornerBound,
    ProfileEntry,
    QuasiLocalityProfile,
    eps_propagation,
    ql_profile,
)
