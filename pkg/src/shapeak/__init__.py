"""Binary integer programming with sharp-peak penalties."""

from shapeak.instances import (ProblemInstance, example2_instance, gen_classical_mimo, gen_onebit,
                               gen_quadratic, gen_qubo, gen_recovery, load_instance, save_instance)
from shapeak.objective import (Preconditioner, onebit_oracle, quadratic_oracle, recovery_oracle,
                               zero_oracle)
from shapeak.oracle import (VerificationReport, brute_force_binary, finite_diff_check,
                            grid_search_prox, verify_descent, verify_exact_penalty,
                            verify_linear_rate, verify_negative_control)
from shapeak.prox import prox_1d, prox_vector
from shapeak.solver import SolveReport, SolverParams, default_params, solve
from shapeak.spf import Family, Psi, SpfSpec, evaluate, subdifferential, subgradient_bound, validate_spf
from shapeak.stationarity import Certificate, is_p_stationary, kkt_residual, mu_bar

__version__ = "0.1.0"

__all__ = [
    "Family",
    "Psi",
    "SpfSpec",
    "evaluate",
    "subdifferential",
    "subgradient_bound",
    "validate_spf",
    "prox_1d",
    "prox_vector",
    "Preconditioner",
    "quadratic_oracle",
    "recovery_oracle",
    "onebit_oracle",
    "zero_oracle",
    "SolverParams",
    "SolveReport",
    "solve",
    "default_params",
    "Certificate",
    "kkt_residual",
    "is_p_stationary",
    "mu_bar",
    "ProblemInstance",
    "gen_recovery",
    "gen_classical_mimo",
    "gen_onebit",
    "gen_qubo",
    "gen_quadratic",
    "example2_instance",
    "save_instance",
    "load_instance",
    "VerificationReport",
    "brute_force_binary",
    "grid_search_prox",
    "verify_exact_penalty",
    "verify_negative_control",
    "verify_descent",
    "verify_linear_rate",
    "finite_diff_check",
]
