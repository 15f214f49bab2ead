"""Primal-dual interior-point solver for block-diagonal SDPs.

Hermitian 2x2 PSD blocks are handled as 4-dimensional Lorentz cones via
their Pauli expansion; 1x1 blocks are nonnegative rays.  The engine is a
homogeneous self-dual embedding with Nesterov-Todd scaling and a
Mehrotra predictor-corrector, so it returns either an optimal solution
or a validated infeasibility/unboundedness certificate.
"""

from .problem import (
    LinearExpression,
    SdpProblem,
    SdpSolution,
    SolutionStatus,
    VerificationReport,
    solve,
    verify_solution,
)
from .hsd import SolverOptions

__all__ = [
    "LinearExpression",
    "SdpProblem",
    "SdpSolution",
    "SolutionStatus",
    "SolverOptions",
    "VerificationReport",
    "solve",
    "verify_solution",
]
