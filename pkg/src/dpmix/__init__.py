"""Posteriors for the number of clusters in Dirichlet process mixtures with a
prior on the concentration parameter.

Exact desk-scale computation (partition enumeration), a partial-Bell fast
path for size-only data at moderate scale, a collapsed Gibbs sampler with
concentration-parameter augmentation, and numerical verification of the
finite-n bounds and identities governing the prior/likelihood odds factors.
"""

from .errors import CertificationError, ConfigError, QuadratureError, ResourceLimitError
from .gibbs import ChainState, ChainTrace, alpha_update, gibbs_sweep, run_chain
from .kernels import (
    BoundedLocation,
    GaussianConjugate,
    MixtureTruth,
    TabulatedDensity,
    UniformLocation,
    constant_data_size_log_marginal,
    read_data,
    sample_truth,
    scaled_range_statistic,
    write_data,
)
from .numerics import (
    enumerate_compositions,
    enumerate_set_partitions,
    log_ascending_factorial,
    log_sum_exp,
    lower_incomplete_gamma,
    partial_bell_log_column,
    partial_bell_log_sum,
)
from .posterior import (
    PosteriorKnTable,
    RatioReport,
    lemma_s6_exhaustive,
    mc_expected_r,
    posterior_alpha_cdf,
    posterior_kn_bruteforce,
    posterior_kn_sizeonly,
    ratio_report,
)
from .priors import (
    A2Certificate,
    A3Certificate,
    BoundedPolyPrior,
    GammaPrior,
    GeneralizedGammaPrior,
    PointMassPrior,
    c_ratio,
    conditional_alpha_moment,
    fit_a2_certificate,
    lemma_s2_sandwich,
    lemma_s3_constant,
    prop1_upper_bound,
    truncated_c_ratio,
    verify_a3,
    weight_integral,
)

__version__ = "0.1.0"
