"""Low-rank ADI solvers for large sparse Lyapunov equations.

The package solves A X + X A^* + B B^* = 0 and the generalized variant
A X M^* + M X A^* + B B^* = 0 for a low-rank factor Z with X ~ Z Z^*,
using the low-rank ADI iteration together with several shift strategies,
including residual-norm-minimizing self-generating shifts.
"""

from .engine import LyapunovProblem, SolveReport, lr_adi_solve
from .problems import gen_cd2d, gen_cd3d, gen_rhs

__all__ = [
    "LyapunovProblem",
    "SolveReport",
    "lr_adi_solve",
    "gen_cd2d",
    "gen_cd3d",
    "gen_rhs",
]

__version__ = "0.1.0"
