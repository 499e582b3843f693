"""Bayesian sparse multivariate regression with DAG-structured errors.

Two samplers are provided: an exact blocked Gibbs sampler over the joint
model (``ess_run``) and a scalable two-step sampler that first selects
regression coefficients per response and then fits the error DAG on the
estimated residuals (``tes_run``).
"""

__version__ = "0.1.0"

from .core import (
    CholeskyPair,
    ErrorEstimate,
    OrderedDag,
    RegressionData,
    SparseCoefState,
    dag_submatrices,
    mcd_compose,
    mcd_decompose,
)
from .dag_wishart import (
    DagWishartParams,
    log_prior_dag,
    log_zeta_j,
    posterior_mean_L_column,
    posterior_mode_d_j,
    sample_L_column,
    sample_d_j,
)
from .ess import EssConfig, EssState, ess_run
from .tes import TesConfig, TesResult, tes_run
from .selection import (
    ChainRecord,
    estimate_B_from_chain,
    estimate_L_from_chain,
    estimate_L_posterior_mean,
    mpm_select_dag,
    mpm_select_gamma,
)
from .simulate import GroundTruth, SimSpec, generate, place_support
from .metrics import (
    ConfusionCounts,
    effective_sample_size,
    relative_errors,
    selection_metrics,
)
