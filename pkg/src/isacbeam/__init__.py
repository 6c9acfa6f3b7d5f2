"""Certified global optimization of joint sensing/communication transmit beamforming.

The package solves

    minimize  -sum_k log(1 + Gamma_k) + rho * tr(R_X^-1)

over transmit covariances, to certified epsilon-optimality via branch-and-bound
on per-user SINR boxes with McCormick-envelope relaxations, with closed-form
fast paths for the single-user and mutually orthogonal cases and an optional
learned node-pruning policy.
"""

from .bnb import (
    BnbResult,
    NodeSolveError,
    solve_bnb,
    worst_case_iterations,
)
from .closedform import (
    ChannelsNotOrthogonal,
    check_orthogonal,
    solve_orthogonal_case,
    solve_single_user,
)
from .extract import ZeroBeamGain, recover_beamformers
from .gnn import (
    GnnPolicy,
    GnnWeights,
    load_weights,
    policy_score,
    save_weights,
    zero_weights,
)
from .model import (
    BeamformingSolution,
    ProblemInstance,
    SingularCovariance,
    crb,
    dbm_to_linear,
    gen_scenario1,
    gen_scenario2,
    linear_to_dbm,
    objective,
    sinr,
    sum_rate,
)
from .solver import InfeasibleBox, MerProblem, NumericalFailure, solve_mer

__version__ = "0.1.0"

__all__ = [
    "BeamformingSolution",
    "BnbResult",
    "ChannelsNotOrthogonal",
    "GnnPolicy",
    "GnnWeights",
    "InfeasibleBox",
    "MerProblem",
    "NodeSolveError",
    "NumericalFailure",
    "ProblemInstance",
    "SingularCovariance",
    "ZeroBeamGain",
    "check_orthogonal",
    "crb",
    "dbm_to_linear",
    "gen_scenario1",
    "gen_scenario2",
    "linear_to_dbm",
    "load_weights",
    "objective",
    "policy_score",
    "recover_beamformers",
    "save_weights",
    "sinr",
    "solve_bnb",
    "solve_mer",
    "solve_orthogonal_case",
    "solve_single_user",
    "sum_rate",
    "worst_case_iterations",
    "zero_weights",
    "__version__",
]
