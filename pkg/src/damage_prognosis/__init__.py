"""Population-based crack-growth prognosis with active allocation of a high-fidelity monitor."""

from .active import (
    AllocationDecision,
    ErrorRecord,
    error_record,
    mse_error,
    select_structure,
    splice_curve,
    update_model,
)
from .config import ExperimentConfig, load_config
from .evaluation import (
    PopulationStats,
    TerminalErrorSet,
    random_baseline,
    terminal_error_set,
    weighted_terminal_error,
)
from .fpca import FpcaModel, fit_fpca, project, reconstruct
from .inference import (
    HmcConfig,
    PartialObservation,
    PosteriorSamples,
    grad_log_posterior,
    hmc_sample,
    log_posterior,
    posterior_point_prediction,
    predict_curve,
)
from .paris import DamageCurve, Fidelity, ParisParams, TimeGrid, degrade, make_grid, simulate_curve
from .pipeline import run_experiment
from .prior import GaussianPrior, fit_gaussian_prior, log_prior_density

__version__ = "0.1.0"
