"""Teleportation-enhanced phase estimation with Gaussian moment propagation."""

from telephase.errors import (
    DegenerateMeasurement,
    InfeasibleBudget,
    InvalidParameter,
    SensitivityUndefined,
    TelephaseError,
)
from telephase.gaussian import (
    VACUUM_VARIANCE,
    AffineMap,
    GaussianState,
    balanced_bs,
    homodyne_condition,
    loss_channel,
    make_coherent,
    make_tmsv,
    mean_photons,
    phase_rotate,
)
from telephase.protocol import ProtocolMoments, ProtocolParams, run_ensemble, teleport_step
from telephase.formulas import (
    coherent_baseline_sigma,
    effective_squeezing,
    ideal_moments,
    lossy_moments,
)
from telephase.optimizer import Constraint, Optimum, evaluate, optimize, solve_alpha, sweep

__version__ = "0.1.0"
