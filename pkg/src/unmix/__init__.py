"""unmix: identification and estimation of linear mixing models through
zero restrictions on higher-order moment and cumulant tensors."""

__version__ = "0.1.0"

from .tensors import (  # noqa: F401
    SymmetricTensor,
    multilinear_apply,
    multilinear_apply_general,
    associated_poly_eval,
    project_onto_pattern,
    unique_indices,
)
from .moments import (  # noqa: F401
    sample_moments,
    kstatistic,
    cumulants_from_moments,
    moments_from_cumulants,
    load_data_csv,
)
from .restrictions import (  # noqa: F401
    ZeroPattern,
    make_pattern,
    check_genericity,
    in_identified_set,
    local_identification_test,
    enumerate_identified_set_2d,
    signed_permutations,
)
from .estimator import (  # noqa: F401
    RestrictionSpec,
    EstimatorOptions,
    EstimationResult,
    estimate,
    estimate_from_tensors,
    estimate_sigma_plugin,
    estimate_sigma_bootstrap,
)
from .inference import chi_square_cdf, j_test, c_test  # noqa: F401
from .metrics import frobenius_error, amari_error, align_to_reference  # noqa: F401
