"""Entropy-series moment and tail bounds for random fields, with Monte Carlo checks.

The library computes everything on finite discretisations: a weighted point
set stands in for the integration domain, a finite semi-metric set for the
index set of the field.  Covering numbers, mixed sup/integral norms, and
the theta-optimised entropy series are then exactly computable, and every
theoretical bound can be certified against seeded simulation.
"""

from .spaces import (
    MeasureSpace,
    IndexSpace,
    Field,
    build_measure_space,
    build_index_space,
    build_index_space_from_matrix,
    tensor_field,
    make_field,
)
from .norms import (
    INF,
    NormSpec,
    lp_norm,
    mixed_norm,
    cl_norm,
    lc_norm,
    cl_modulus,
    lc_modulus,
)
from .entropy import (
    EntropyProfile,
    covering_number_upper,
    covering_number_exact,
    packing_number_lower,
    entropy_profile,
    entropy_dimension_fit,
    analytic_profile,
)
from .bounds import (
    ROSENTHAL_CONSTANT,
    ROSENTHAL_CONSTANT_SYMMETRIC,
    rosenthal_constant,
    GeometricDecay,
    PowerDecay,
    MixingaleCoefficient,
    mixingale_coefficient,
    SeriesEvaluation,
    entropy_series,
    optimize_theta,
    power_law_bound,
    legendre_tail,
    TailBound,
    tail_bound_table,
    moment_scale,
    increment_distance,
    MomentBoundReport,
    field_moment_bound,
    normed_sum_moment_bound,
    realization_entropy_bound,
    PowerGrowthFit,
    fit_power_growth,
    power_growth_tail,
)
from .simulate import (
    stream,
    ScalarLaw,
    GaussianFieldModel,
    ScalarInnovationModel,
    MartingaleFieldModel,
    Ar1FieldModel,
    gaussian_abs_moment,
    sample_field,
    normed_sum,
    EmpiricalMoments,
    empirical_moment,
    empirical_moments_multi,
    TailEstimate,
    empirical_tail,
    CltDiagnostic,
    clt_diagnostic,
    ks_critical_value,
    EquicontinuityTable,
    equicontinuity_diagnostic,
    RatioExperiment,
    rosenthal_ratio_experiment,
    SecondNormCertificate,
    random_entropy_expectation,
    EmpiricalMomentOracle,
)

__version__ = "0.1.0"
