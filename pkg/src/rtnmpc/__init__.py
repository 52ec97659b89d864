"""Real-time iteration MPC with learned residual dynamics.

The learned part of the model enters the optimal control problem only
through per-node Taylor approximations, so the network is evaluated once
per control cycle, as one batch over the horizon.
"""

__version__ = "0.1.0"

from .dynamics import DoubleIntegratorModel, QuadParams, QuadrotorModel
from .integrator import EvalCounter, rk4_sensitivities, rk4_step
from .ocp import OcpConfig, RtiController, build_qp, rti_cycle, solve_feedback
from .qp import condense, solve_box_qp
from .residual import AnalyticDragResidual, NetworkResidual
from .taylor import TaylorApprox, TaylorStack, prepare_nodes

__all__ = [
    "AnalyticDragResidual",
    "DoubleIntegratorModel",
    "EvalCounter",
    "NetworkResidual",
    "OcpConfig",
    "QuadParams",
    "QuadrotorModel",
    "RtiController",
    "TaylorApprox",
    "TaylorStack",
    "__version__",
    "build_qp",
    "condense",
    "prepare_nodes",
    "rk4_sensitivities",
    "rk4_step",
    "rti_cycle",
    "solve_box_qp",
    "solve_feedback",
]
