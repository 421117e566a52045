"""Reconstruction operators: truncated Lagrange, splines, monotone splines, Bernstein."""

from .bernstein import bernstein_basis, bernstein_eval
from .core import (
    ApproximatorKind,
    CellBox,
    DomainError,
    Field,
    HaloError,
    TruncationPolicy,
    truncate,
)
from .lagrange import barycentric_weights, lagrange_basis, lagrange_eval_1d
from .operators import Approximator, get_operator, tensor_eval
from .spline import (
    PiecewiseCubic,
    hermite_range,
    monotone_build_1d,
    monotone_slopes,
    notaknot_slopes,
    spline_build_1d,
)

__all__ = [
    "Approximator",
    "ApproximatorKind",
    "CellBox",
    "DomainError",
    "Field",
    "HaloError",
    "PiecewiseCubic",
    "TruncationPolicy",
    "barycentric_weights",
    "bernstein_basis",
    "bernstein_eval",
    "get_operator",
    "hermite_range",
    "lagrange_basis",
    "lagrange_eval_1d",
    "monotone_build_1d",
    "monotone_slopes",
    "notaknot_slopes",
    "spline_build_1d",
    "tensor_eval",
    "truncate",
]
