"""Numerical geometry: chart frames, fiber solving, forms, Monte Carlo, Ricci."""

from .forms import FormMatrix, fs_ambient, fs_pushed, mixed_det, mixed_det_multiset, pullback_form
from .frames import AmbientSpace, ChartFrame, jacobian_rank_probe, make_frame, sample_base
from .fibers import solve_fiber
from .montecarlo import BranchBatch, BranchPoint, MCEstimate, Quadrature, integrate, integrate_multi, volume
from .ricci import ricci_batch, ricci_matrix

__all__ = [
    "AmbientSpace",
    "BranchBatch",
    "BranchPoint",
    "ChartFrame",
    "FormMatrix",
    "MCEstimate",
    "Quadrature",
    "fs_ambient",
    "fs_pushed",
    "integrate",
    "integrate_multi",
    "jacobian_rank_probe",
    "make_frame",
    "mixed_det",
    "mixed_det_multiset",
    "pullback_form",
    "ricci_batch",
    "ricci_matrix",
    "sample_fiber_points",
    "solve_fiber",
    "volume",
]

from .montecarlo import sample_fiber_points  # noqa: E402  (circular-import ordering)
