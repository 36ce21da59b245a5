"""qmslab: a finite-dimensional laboratory for quantum Markov semigroups.

Builds GKSL generators, computes invariant states and their support
structure, classifies ergodicity / mixing / Kolmogorov behavior, builds
KMS-adjoint semigroups and detailed-balance decompositions, and
materializes finite time-grid truncations of the weak Markov dilation to
check the structural identities numerically.
"""

from .matrixcore import (
    DEFAULT_TOLS,
    Tolerances,
    gram_quotient,
    matrix_exp,
    nullspace,
    psd_power,
)
from .semigroup import (
    QMS,
    OpenSystemModel,
    SuperOp,
    build_generator,
    evolve,
    is_cp_unital,
    minimal_semigroup_iterate,
    predual,
    qms_from_step,
    spectral_gap,
)
from .states import (
    DensityState,
    density_state,
    invariant_states,
    is_subharmonic,
    reachability_tower,
    subharmonic_limit,
    support_projection,
)
from .algebra import (
    StarSubalgebra,
    block_structure,
    commutant,
    conditional_expectation,
    generated_algebra,
)
from .fixedpoints import (
    cal_E_map,
    convergence_verdict,
    dissipation_form,
    fixed_point_set,
    g_algebra,
    irreducibility_report,
    multiplicative_domain_algebra,
)
from .adjoint import (
    ModularData,
    detailed_balance_decomposition,
    j_correlation,
    kms_adjoint,
    modular_data,
)
from .asymptotics import (
    conjecture_probe,
    correlation,
    cross_check_typeI,
    k_property_test,
    spectral_classification,
)
from .dilation import (
    TimeGrid,
    build_dilation_space,
    compression_check,
    filtration_projection,
    k_shift_probe,
    markov_property_check,
    represent_j,
    shift_isometry_check,
)
from .models import builtin, classical_chain_embed, load_model_file

__version__ = "0.1.0"
