"""Homodyne qubit readout in circuit QED: trajectory simulation and exact one-step Bayesian state estimation."""
from .bayes import (
    BayesFactors,
    PointContactParams,
    bayes_factors,
    correction_factors,
    exact_likelihoods,
    exact_path,
    exact_update,
    gaussian_path,
    gaussian_update,
    integrated_signal,
    korotkov_path,
    korotkov_update,
    point_contact_update,
)
from .cavity import (
    CavityQubitParams,
    FieldPair,
    RateGrid,
    RateSample,
    build_rate_grid,
    cavity_fields,
    effective_detunings,
    integrate_fields_ode,
    rates,
    steady_fields,
)
from .estimators import (
    ExactBayesEstimator,
    GaussianBayesEstimator,
    HomodyneSimulator,
    KorotkovBayesEstimator,
    TrajectoryFilter,
)
from .trajectory import (
    CurrentRecord,
    QubitState,
    StepOverflow,
    Trajectory,
    ensemble_average,
    lindblad_reference,
    simulate_ito,
    simulate_stratonovich,
    stratonovich_drift_correction,
)

__version__ = "0.1.0"
