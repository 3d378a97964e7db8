"""Treatment effects under self-selection with a trivariate Clayton copula.

Three threshold equations (selection, intermediate outcome, install) with
logistic margins and Clayton-coupled errors, fitted by MALA, plus
propensity-score benchmarks and model-implied counterfactuals.
"""

from .copula import (
    CopulaDomainError,
    clayton_cdf2,
    clayton_cdf3,
    clayton_eval,
    kendall_tau,
    logistic_cdf,
    theta_transform,
)
from .counterfactuals import (
    CounterfactualReport,
    adverse_selection_loss,
    ate,
    att,
    counterfactual_report,
    cpm,
    joint_outcome_prob,
    late_by_group,
)
from .diagnostics import heidelberger_welch
from .io import IngestionReport, ModelSpec, RunConfig, load_config, parse_dataset, write_dataset_csv
from .likelihood import (
    CELL_LABELS,
    Dataset,
    ImpressionRecord,
    ParameterSet,
    cell_probabilities,
    log_likelihood,
    log_likelihood_and_gradient,
)
from .propensity import (
    control_function_ate,
    ipw_ate,
    naive_probit_effect,
    ols_fit,
    probit_fit,
    regression_adjustment_ate,
)
from .sampler import (
    MalaConfig,
    PosteriorChain,
    PriorSpec,
    log_posterior,
    log_posterior_gradient,
    posterior_summary,
    run_chain,
    sample_mala,
)
from .simulate import CovariateGenSpec, acceptance_design, simulate, simulate_dataset

__version__ = "0.1.0"
