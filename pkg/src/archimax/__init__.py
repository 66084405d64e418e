"""Clustered Archimax copulas: simulation, extremal analysis and fitting."""

from .errors import ArchimaxError, CapabilityError, NumericalError, ValidationError
from .extremal import (
    ClusterClass,
    LimitStdfReport,
    beta_rho_moment,
    check_radial_ordering,
    chi_curve_empirical,
    classify_generator,
    classify_model,
    limit_stdf_ai,
    limit_stdf_eval,
    pairwise_limit_lambda,
)
from .generator import ArchimedeanGenerator, RadialDistribution, williamson_transform
from .inference import (
    HomogeneityResult,
    PseudoObservations,
    block_maxima,
    cfg_lambda,
    cfg_pickands,
    cluster_profile_fit,
    cluster_theta_bar,
    fit_cluster_pairs,
    homogeneity_analysis,
    homogeneity_statistic,
    homogeneity_test,
    jackknife_sigma,
    pairwise_theta_fit,
    pseudo_observations,
)
from .radial_fit import (
    RadialFitConfig,
    fit_pair_rho,
    fit_radial,
    full_composite_loglik,
    pair_mixture_density,
    pairwise_loglik,
)
from .sampler import (
    ClusteredModelSpec,
    ClusterPartition,
    RadialCopulaSpec,
    sample_clustered,
    sample_gaussian_copula,
    sample_gumbel_copula,
    sample_radial_vector,
    sample_simplex_vector,
)
from .stdf import (
    AlphaTransformedStdf,
    DNormMCStdf,
    IndependenceStdf,
    LogisticStdf,
    Stdf,
    alpha_transform,
    dnorm_mc_eval,
    independence_w_sampler,
    logistic_w_sampler,
    upper_tail_coeff,
)

__version__ = "0.1.0"
