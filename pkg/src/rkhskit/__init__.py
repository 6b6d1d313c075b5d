"""Kernel ridge regression, Nystrom approximation, vector-valued KRR and
kernel Koopman operator estimation, with exact finite-state oracles."""

from .errors import ConfigError, InputError, NumericalError, RKHSError
from .kernels import (
    FeatureMap,
    Gaussian,
    GramMatrix,
    KernelSpec,
    Linear,
    Product,
    RandomFeatures,
    Sum,
    build_feature_map,
    cross_gram,
    eval_kernel,
    gram,
    kernel_from_dict,
    kernel_to_dict,
    parse_kernel,
)
from .koopman import (
    KoopmanModel,
    KoopmanModes,
    Trajectory,
    fit_koopman,
    forecast_observable,
    forecast_state,
    koopman_modes,
    koopman_weights,
    reduced_matrix,
)
from .ridge import (
    KrrModel,
    NystromModel,
    SpdSolveReport,
    fit_krr,
    fit_krr_dual_form,
    fit_nystrom,
    predict_krr,
    predict_nystrom,
    select_centers,
    solve_spd,
)
from .vvridge import VvKrrModel, fit_linear_operator, fit_vvkrr, predict_vvkrr

__version__ = "0.1.0"
