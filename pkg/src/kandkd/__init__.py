"""KAN teachers distilled into small MLP students with decoupled knowledge distillation."""

__version__ = "0.1.0"

from .spline import SplineGrid, basis_values, basis_derivatives
from .kan import KanNetwork, KanLayer, KanEdge, kan_init, silu
from .mlp import MlpNetwork, mlp_init
from .distill import DkdConfig, dkd_loss, kd_coupled, tckd, nckd, total_loss
from .metrics import EvalReport, evaluate

__all__ = [
    "SplineGrid",
    "basis_values",
    "basis_derivatives",
    "KanNetwork",
    "KanLayer",
    "KanEdge",
    "kan_init",
    "silu",
    "MlpNetwork",
    "mlp_init",
    "DkdConfig",
    "dkd_loss",
    "kd_coupled",
    "tckd",
    "nckd",
    "total_loss",
    "EvalReport",
    "evaluate",
]
