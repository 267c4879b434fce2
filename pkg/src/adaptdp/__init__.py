"""Discretisation-adaptive discrepancy principle for filter-based regularisation."""

from adaptdp.problem import (
    AveragingProjection,
    LinearProblem,
    NoiseModel,
    SingularSystem,
    SVDProjection,
    compute_svd,
    project_data,
    sample_noisy_data,
    svd_projection,
)
from adaptdp.regularizers import (
    LandweberState,
    ProjectedOperator,
    landweber_closed_form,
    landweber_step,
    spectral_cutoff,
    tikhonov_solve,
)
from adaptdp.stopping import (
    StoppingConfig,
    StoppingReport,
    algorithm1_modified_dp,
    algorithm2_modified_dp_tikhonov,
    discrepancy_index,
    early_stopping_dp,
    naive_max_rule,
    tikhonov_discrepancy_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "AveragingProjection",
    "LinearProblem",
    "NoiseModel",
    "SingularSystem",
    "SVDProjection",
    "compute_svd",
    "project_data",
    "sample_noisy_data",
    "svd_projection",
    "LandweberState",
    "ProjectedOperator",
    "landweber_closed_form",
    "landweber_step",
    "spectral_cutoff",
    "tikhonov_solve",
    "StoppingConfig",
    "StoppingReport",
    "algorithm1_modified_dp",
    "algorithm2_modified_dp_tikhonov",
    "discrepancy_index",
    "early_stopping_dp",
    "naive_max_rule",
    "tikhonov_discrepancy_alpha",
]
