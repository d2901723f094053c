"""Decay certification for boundary-coupled reaction-diffusion / LTI loops.

The package reduces the coupled dynamics to a finite modal model with
certified tail bounds, searches for exponential decay certificates through
matrix inequality feasibility, and validates certificates against stiff
modal simulations.
"""
from .certifier import (
    Certificate,
    VerificationReport,
    build_theta1,
    build_theta2,
    build_theta3,
    feasible_P,
    max_decay,
    schur_feasibility,
    search_certificate,
    verify,
)
from .config import ScenarioConfig, build_basis, build_plant, load_scenario
from .errors import (
    BracketingError,
    ConfigError,
    DivergenceError,
    ExpressionError,
    RdstabError,
    TailBoundError,
)
from .reduction import (
    CoupledPlant,
    LiftingData,
    OdePlant,
    ReducedModel,
    assemble,
    decompose_reaction,
    lifting,
    trace_coefficients,
)
from .simulator import (
    EnvelopeReport,
    ModalSystem,
    Observables,
    SimulationConfig,
    Trajectory,
    build_system,
    envelope_report,
    lyapunov_series,
    observe,
    simulate,
    step_propagator,
    write_csv,
    write_sidecar,
)
from .spectral import (
    EigenPair,
    SpectralBasis,
    SturmLiouvilleProblem,
    closed_form_basis,
    discretized_basis,
    gauss_rule,
    h1_energy,
    project,
    residual_energy,
    robin_basis,
    tail_m1,
    tail_m2,
)

__version__ = "0.1.0"

__all__ = [
    "BracketingError",
    "Certificate",
    "ConfigError",
    "CoupledPlant",
    "DivergenceError",
    "EigenPair",
    "EnvelopeReport",
    "ExpressionError",
    "LiftingData",
    "ModalSystem",
    "Observables",
    "OdePlant",
    "RdstabError",
    "ReducedModel",
    "ScenarioConfig",
    "SimulationConfig",
    "SpectralBasis",
    "SturmLiouvilleProblem",
    "TailBoundError",
    "Trajectory",
    "VerificationReport",
    "assemble",
    "build_basis",
    "build_plant",
    "build_system",
    "build_theta1",
    "build_theta2",
    "build_theta3",
    "closed_form_basis",
    "decompose_reaction",
    "discretized_basis",
    "envelope_report",
    "feasible_P",
    "gauss_rule",
    "h1_energy",
    "lifting",
    "load_scenario",
    "lyapunov_series",
    "max_decay",
    "observe",
    "project",
    "residual_energy",
    "robin_basis",
    "schur_feasibility",
    "search_certificate",
    "simulate",
    "step_propagator",
    "tail_m1",
    "tail_m2",
    "trace_coefficients",
    "verify",
    "write_csv",
    "write_sidecar",
]
