import numpy as np
import pytest

from damage_prognosis.config import ExperimentConfig
from damage_prognosis.fpca import fit_fpca, project
from damage_prognosis.paris import ParisParams, cycles_to_reach, make_grid, simulate_curve
from damage_prognosis.prior import fit_gaussian_prior

M_BASE = 2.65
TABLE1 = {
    "blue": ParisParams(M_BASE, 6e-13, 300.0, 3.0),
    "orange": ParisParams(M_BASE, 5.58e-13, 300.0, 3.0),
    "green": ParisParams(1.001 * M_BASE, 6.72e-13, 300.0, 3.0),
}
TABLE2 = {
    "red": ParisParams(0.995 * M_BASE, 6.42e-13, 300.0, 3.0),
    "purple": ParisParams(0.999 * M_BASE, 5.1e-13, 300.0, 3.0),
    "brown": ParisParams(1.0015 * M_BASE, 6.12e-13, 300.0, 3.0),
    "pink": ParisParams(1.005 * M_BASE, 6.72e-13, 300.0, 3.0),
}


@pytest.fixture(scope="session")
def n_cycles_max():
    return cycles_to_reach(TABLE1["green"], 20.0)


@pytest.fixture(scope="session")
def grid(n_cycles_max):
    return make_grid(100, n_cycles_max)


@pytest.fixture(scope="session")
def training_curves(grid):
    return [simulate_curve(p, grid, structure_id=sid) for sid, p in TABLE1.items()]


@pytest.fixture(scope="session")
def testing_curves(grid):
    return {sid: simulate_curve(p, grid, structure_id=sid) for sid, p in TABLE2.items()}


@pytest.fixture(scope="session")
def model(training_curves):
    return fit_fpca(training_curves, variance_threshold=0.95)


@pytest.fixture(scope="session")
def prior(model, training_curves):
    return fit_gaussian_prior(project(model, np.vstack([c.values for c in training_curves])))


@pytest.fixture(scope="session")
def fast_config():
    """Default populations with a lighter sampler for pipeline-level tests."""
    return ExperimentConfig.model_validate({
        "hmc": {"n_samples": 300, "n_warmup": 150},
        "second_population": {"n_structures": 3},
        "monitor": {"checkpoints": [10, 40, 80], "decision_step": 40},
    })


@pytest.fixture(scope="session")
def default_result():
    """Full default run at master seed 0 (shared by golden and acceptance checks)."""
    from damage_prognosis.pipeline import run_experiment

    return run_experiment(ExperimentConfig())
