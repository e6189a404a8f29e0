"""Differentially private Luenberger observers for positive linear systems."""

from .design import (
    DesignResult,
    EtaInterval,
    FeasibilityVerdict,
    check_feasible,
    design_for_performance,
    eta_bounds,
    min_contraction,
    minimize_sensitivity,
)
from .empirical import (
    AdjacentPair,
    Trajectory,
    bound_vs_empirical_report,
    empirical_sensitivity,
    make_adjacent_pair,
    simulate_observer,
    simulate_plant,
)
from .linalg import induced_l1_norm, is_nonnegative, pseudo_inverse, spectral_norm
from .mechanism import NoiseSpec, PrivacyParams, calibrate, kappa, q_function, q_inverse, sample_noise
from .sensitivity import (
    AdjacencyParams,
    ObserverSpec,
    SensitivityReport,
    contraction_penalty,
    l1_sensitivity_bound,
    l2_sensitivity_bound_squared,
    sensitivity_objective,
    series_closed_form,
)

__version__ = "0.1.0"
