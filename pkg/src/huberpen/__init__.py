"""Incremental gradient method with time-varying one-sided Huber penalties."""

from .errors import DivergenceError, DomainError, NumericalError
from .oracle import (
    OracleSolution,
    check_drift_lemma,
    check_gap_lemma,
    check_level_set,
    minimize_penalized,
    project_polyhedron,
    rate_fit,
    solve_constrained_exact,
    subgradient_bound,
)
from .penalty import (
    Halfspace,
    PenaltyParams,
    dist_halfspace,
    grad_delta_perturbation_bound,
    grad_h_delta,
    h_delta,
    p_delta,
    p_delta_prime,
)
from .problem import (
    ConstrainedProblem,
    GeneratorSpec,
    QuadraticObjective,
    F_value,
    dist_feasible_set,
    f_value,
    generate_problem,
    grad_F,
    grad_f,
    load_problem,
    save_problem,
)
from .schedule import Schedule, delta_at, drift_bound, gamma_at, step_at, validate
from .solver import SolverConfig, SolverTrace, run, run_ensemble, sample_index, step

__version__ = "0.1.0"
