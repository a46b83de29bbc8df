"""Futaki invariants, energy functionals, and polynomial norms of complete intersections.

Exact rational Futaki invariants via the closed intersection-theoretic formula,
Monte-Carlo evaluation of the Aubin-Yau / Futaki / Mabuchi functionals at
one-parameter-subgroup potentials, and the associated norms on defining
polynomials, with desk-scale verification of the identities relating them.
"""

from .errors import CIEnergyError
from .futaki import ChowWeights, chow_weights, futaki_lu, futaki_of_field, futaki_via_weights
from .polynomials import (
    COMPOSE,
    COMPOSE_INVERSE,
    CompleteIntersection,
    DiagonalField,
    GroupElement,
    HomogeneousPolynomial,
    eigenweight,
    eval_and_gradient,
    parse_polynomial,
    parse_variety,
    phi_sigma,
    transform_polynomial,
)

__version__ = "0.1.0"

__all__ = [
    "CIEnergyError",
    "COMPOSE",
    "COMPOSE_INVERSE",
    "ChowWeights",
    "CompleteIntersection",
    "DiagonalField",
    "GroupElement",
    "HomogeneousPolynomial",
    "chow_weights",
    "eigenweight",
    "eval_and_gradient",
    "futaki_lu",
    "futaki_of_field",
    "futaki_via_weights",
    "parse_polynomial",
    "parse_variety",
    "phi_sigma",
    "transform_polynomial",
]
