"""Time-optimal navigation in a channel ``|x1| <= 1`` through a time-periodic flow.

The maximum-principle boundary value problem is solved by shooting on the
initial adjoint angle, following boundary arcs and their departure branches.
"""
__version__ = "0.1.0"

from .fieldexpr import ExprError, ExprEvalError, ExprSyntaxError, evaluate, parse
from .flowfield import FlowField, builtin, check_assumption_h, from_expressions, scan_safeguards
from .pmp import ExtState, control_law, nontriviality_margin, recover_lambda, singular_diagnostics
from .problem import ProblemSpec
from .integrate import integrate_until_event, rk4_step
from .shooting import Extremal, ExtremalField, follow_boundary, shoot, sweep

__all__ = [
    "__version__",
    "ExprError",
    "ExprEvalError",
    "ExprSyntaxError",
    "evaluate",
    "parse",
    "FlowField",
    "builtin",
    "check_assumption_h",
    "from_expressions",
    "scan_safeguards",
    "ExtState",
    "control_law",
    "nontriviality_margin",
    "recover_lambda",
    "singular_diagnostics",
    "ProblemSpec",
    "integrate_until_event",
    "rk4_step",
    "Extremal",
    "ExtremalField",
    "follow_boundary",
    "shoot",
    "sweep",
]
