"""Pre-trained Gaussian process priors for transfer Bayesian optimization.

Fit a GP prior (mean, kernel, noise) on completed tuning tasks, freeze it,
and run Bayesian optimization on a new task under that prior.  The package
is organized as a functional core (gp, objectives, pretrain, acquisition,
bo, data) with a thin scikit-learn style estimator facade on top.
"""

from .acquisition import AcquisitionSpec, MaximizeResult, gp_ucb_zeta, maximize, score
from .bo import (
    BoStep,
    BoTrace,
    GpSampleOracle,
    TableOracle,
    max_information_gain,
    performance_profile,
    read_trace,
    run_bo,
    run_random,
    run_stbo,
    simple_regret,
    write_trace,
)
from .bounds import (
    RegretBoundInputs,
    observation_bias_term,
    regret_bound_pi,
    regret_bound_ucb,
    variance_bias_term,
)
from .data import (
    DimSpec,
    MultiTaskDataset,
    SearchSpace,
    SynthConfig,
    SynthResult,
    TaskData,
    extract_matching,
    load_dataset,
    online_map,
    save_dataset,
    synth_generate,
    unwarp_input,
    warp_input,
    warp_output,
)
from .estimators import PriorTrainedGP, SingleTaskGP
from .exceptions import (
    DegenerateMomentsError,
    DomainError,
    InitializationError,
    InputError,
    NoMatchingDataError,
    NumericalError,
    ParameterError,
    ParseError,
    PreboError,
    ValidationError,
)
from .gp import (
    EmpiricalGp,
    GaussianMarginal,
    PosteriorGp,
    condition,
    empirical_gp,
    log_marginal_likelihood,
    prior_marginal,
)
from .moments import MatchingMoments, estimate_moments
from .objectives import (
    CombinedObjective,
    KlObjective,
    NllObjective,
    combined_objective,
    finite_difference_gradient,
    kl_objective,
    nll_objective,
    pseudo_kl,
)
from .params import (
    ARCHITECTURES,
    CONST_MATERN,
    MLP_MATERN,
    GpParams,
    load_model,
    pack,
    random_params,
    save_model,
)
from .pretrain import TrainConfig, fit_type2_ml, pretrain

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "AcquisitionSpec",
    "BoStep",
    "BoTrace",
    "CONST_MATERN",
    "CombinedObjective",
    "DegenerateMomentsError",
    "DimSpec",
    "DomainError",
    "EmpiricalGp",
    "GaussianMarginal",
    "GpParams",
    "GpSampleOracle",
    "InitializationError",
    "InputError",
    "KlObjective",
    "MLP_MATERN",
    "MatchingMoments",
    "MaximizeResult",
    "MultiTaskDataset",
    "NllObjective",
    "NoMatchingDataError",
    "NumericalError",
    "ParameterError",
    "ParseError",
    "PosteriorGp",
    "PreboError",
    "PriorTrainedGP",
    "RegretBoundInputs",
    "SearchSpace",
    "SingleTaskGP",
    "SynthConfig",
    "SynthResult",
    "TableOracle",
    "TaskData",
    "TrainConfig",
    "ValidationError",
    "combined_objective",
    "condition",
    "empirical_gp",
    "estimate_moments",
    "extract_matching",
    "finite_difference_gradient",
    "fit_type2_ml",
    "gp_ucb_zeta",
    "kl_objective",
    "load_dataset",
    "load_model",
    "log_marginal_likelihood",
    "max_information_gain",
    "maximize",
    "nll_objective",
    "observation_bias_term",
    "online_map",
    "pack",
    "performance_profile",
    "prior_marginal",
    "pseudo_kl",
    "random_params",
    "read_trace",
    "regret_bound_pi",
    "regret_bound_ucb",
    "run_bo",
    "run_random",
    "run_stbo",
    "save_dataset",
    "save_model",
    "score",
    "simple_regret",
    "synth_generate",
    "unwarp_input",
    "variance_bias_term",
    "warp_input",
    "warp_output",
    "write_trace",
]
