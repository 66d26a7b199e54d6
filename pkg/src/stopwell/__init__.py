"""Irreversible investment timing when the drift of profits is unknown."""

__version__ = "0.1.0"

from .boundary import BoundaryCurve, fixed_point_solve, psi_apply  # noqa: E402
from .closed_form import ClosedFormPack, lower_bound_b  # noqa: E402
from .model import ModelParams, State, make_params, payoff_g, reference_params  # noqa: E402
from .sampling import McEstimate, RngStream  # noqa: E402
from .valuation import full_info_value, value_from_boundary, value_of_information  # noqa: E402

__all__ = [
    "BoundaryCurve",
    "ClosedFormPack",
    "McEstimate",
    "ModelParams",
    "RngStream",
    "State",
    "fixed_point_solve",
    "full_info_value",
    "lower_bound_b",
    "make_params",
    "payoff_g",
    "psi_apply",
    "reference_params",
    "value_from_boundary",
    "value_of_information",
]
