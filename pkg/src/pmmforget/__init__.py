"""Exact smoothing inference and exponential-forgetting diagnostics for
finite-state pairwise Markov models."""

from .models import (
    CategoricalEmission,
    CustomEmission,
    EuclideanObs,
    FiniteObs,
    FinitePMM,
    GaussianEmission,
    HiddenMarkovModel,
    LinearSwitchingModel,
    NotIrreducibleError,
    PairwiseModel,
    PointInit,
    Trajectory,
    ValidationReport,
    block_transition_density,
    block_transition_matrix,
    joint_log_density,
    reverse_model,
    sample_trajectory,
    stationary_distribution,
    to_finite_pmm,
    validate_model,
    with_stationary_start,
)
from .inference import (
    BlockDistribution,
    ConditionalTransition,
    InvalidWindowError,
    WindowSmoother,
    ZeroLikelihoodError,
    f_matrix,
    forward_backward,
    pmap_decode,
    smoothing_block,
    u_matrix,
)
from .conditions import (
    A1FailureReport,
    Cluster,
    ClusterReport,
    ForgettingCertificate,
    LmsmCheckFailure,
    PositiveRowResult,
    PrimitivityResult,
    SopotResult,
    YPlusSet,
    certificate_from_cluster,
    check_a1_a2_finite,
    check_lmsm,
    check_positive_row,
    check_primitive,
    check_sopot,
    enumerate_y_plus,
    find_clusters,
)
from .forgetting import (
    ForgettingCurve,
    InitialForgettingConfig,
    KappaCount,
    OneSidedConfig,
    OneSidedResult,
    RateFit,
    TwoSidedConfig,
    TwoSidedResult,
    dobrushin,
    fit_decay_rate,
    initial_forgetting_experiment,
    kappa,
    one_sided_experiment,
    theoretical_envelope,
    tv_block,
    two_sided_experiment,
)
from .segmentation import (
    REstimate,
    REstimateConfig,
    SegmentationResult,
    estimate_R,
    expected_error,
)
from .modelio import (
    bundled_model_path,
    load_model,
    model_to_dict,
    read_observations,
    save_model,
    write_trajectory,
)

__version__ = "0.1.0"
