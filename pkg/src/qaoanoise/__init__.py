"""Noisy QAOA: exact simulation, noise-pattern decomposition, closed-form models."""

from .closedform import (
    CostFit,
    FidelityFit,
    delta_exponent,
    eta_exponent,
    fit_cost,
    fit_fidelity,
    haar_cost,
    model_cost,
    model_fidelity,
)
from .decomposition import (
    MLevelCurve,
    NoisePattern,
    assemble_density_matrix,
    c_curve,
    f_curve,
    pattern_count,
    reconstruct_cost,
    reconstruct_fidelity,
    trajectory_state,
)
from .engine import (
    AngleSchedule,
    DensityMatrix,
    NoiseModel,
    PureState,
    expected_cost_dm,
    expected_cost_pure,
    fidelity,
    monte_carlo,
    noisy_state,
    plus_state,
    qaoa_state,
)
from .errors import (
    FitError,
    PreconditionError,
    ResourceLimitError,
    UndefinedExponentError,
    UnsupportedNoiseError,
    ValidationError,
)
from .ising import IsingInstance, diagonal, ground_energy, random_instance
from .optimize import OptimizationReport, optimize_angles

__version__ = "0.1.0"
