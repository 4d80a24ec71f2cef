"""Change-plane quantile regression for functional responses.

Fits RKHS-penalized quantile models whose subgroup effect switches across
a linear threshold in grouping covariates, identifies the subgroups, and
tests for their existence with a closed-form weighted score statistic
calibrated by a wild bootstrap.
"""

from .admm import (AdmmConfig, AdmmState, ChangePlaneFit, NullFit, NullSolver,
                   accuracy, check_loss, classify_subgroups, fit_changeplane,
                   fit_null, gamma_step, lambda_tilde_grid, prox_check, rmise,
                   rmise_components, residual_norms, select_lambda_cv,
                   solve_varphi_d, update_u, update_zeta)
from .data import (FunctionalDataset, StandardizeRecord, load_dataset,
                   save_dataset, standardize)
from .errors import (DataError, DegenerateColumnError, DegenerateInputError,
                     IdentificationError, NumericalError, ParseError,
                     SchemaError)
from .inference import (WastResult, bootstrap_pvalue, pairwise_weight,
                        wast_statistic, weight_matrix)
from .kernels import (KernelSpec, RepresenterCoefficients,
                      evaluate_coefficients, gram_matrix, kernel_eval,
                      penalty_matrix)
from .simulate import (ExperimentSummary, SimScenario, TruthRecord,
                       default_test_gamma, generate_dataset,
                       run_estimation_experiment, run_test_experiment,
                       scenarios_from_config)
from .smoothing import (SmoothingSpec, default_bandwidth, smooth_indicator,
                        smooth_indicator_deriv)

__version__ = "0.1.0"
