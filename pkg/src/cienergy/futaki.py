"""Exact Futaki invariants of complete intersections.

Everything here is arbitrary-precision rational arithmetic; these values are
the oracles for the numerical modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidDimensions, LengthMismatch, NotEigenvector
from .polynomials import CompleteIntersection, DiagonalField, eigenweight

__all__ = ["ChowWeights", "chow_weights", "futaki_lu", "futaki_via_weights", "futaki_of_field"]


@dataclass(frozen=True)
class ChowWeights:
    """Exact weight data of a complete intersection type (N; d_1..d_s).

    ``a``: the weights with F(X) = sum a_i kappa_i;
    ``q``: the exponents q_k = 1 - m/(d_k (n+1));
    ``V``: partial degrees V_k = d_1...d_k;
    ``kenergy_constant``: n m/(n+1);
    ``c1_pairing``: m*D, the pairing of c_1 with the hyperplane class.
    """

    N: int
    degrees: tuple
    a: tuple
    q: tuple
    V: tuple
    kenergy_constant: Fraction
    D: int
    c1_pairing: int

    @property
    def m(self):
        return self.N + 1 - sum(self.degrees)

    @property
    def is_fano(self):
        """True when the anticanonical multiple m is positive."""
        return self.m > 0


def _check_dims(N, degrees):
    s = len(degrees)
    if N < 1 or not (1 <= s <= N):
        raise InvalidDimensions(f"need 1 <= s <= N with N >= 1, got N={N}, s={s}")
    if any(d < 1 for d in degrees):
        raise InvalidDimensions(f"degrees must be >= 1, got {degrees}")


def chow_weights(N, degrees):
    """Exact ChowWeights for type (N; d_1..d_s); m <= 0 is allowed (non-Fano)."""
    degrees = tuple(int(d) for d in degrees)
    _check_dims(N, degrees)
    s = len(degrees)
    n = N - s
    m = Fraction(N + 1 - sum(degrees))
    D = 1
    for d in degrees:
        D *= d
    a = tuple(-(n + 1) * m**n * D + m ** (n + 1) * Fraction(D, d) for d in degrees)
    q = tuple(1 - m / (d * (n + 1)) for d in degrees)
    V = []
    acc = 1
    for d in degrees:
        acc *= d
        V.append(acc)
    return ChowWeights(
        N=N,
        degrees=degrees,
        a=a,
        q=q,
        V=tuple(V),
        kenergy_constant=Fraction(n) * m / (n + 1),
        D=D,
        c1_pairing=int(m) * D,
    )


def futaki_lu(N, degrees, kappa):
    """Futaki invariant by the closed formula.

    F(X) = (N-s+1) m^{N-s} D (-sum kappa_i + (m/(N-s+1)) sum kappa_i/d_i), exact.
    """
    degrees = tuple(int(d) for d in degrees)
    _check_dims(N, degrees)
    kappa = tuple(Fraction(k) for k in kappa)
    if len(kappa) != len(degrees):
        raise LengthMismatch(f"{len(kappa)} eigenvalues for {len(degrees)} polynomials")
    s = len(degrees)
    n = N - s
    m = Fraction(N + 1 - sum(degrees))
    D = 1
    for d in degrees:
        D *= d
    return (n + 1) * m**n * D * (-sum(kappa) + Fraction(m, n + 1) * sum(k / d for k, d in zip(kappa, degrees)))


def futaki_via_weights(cw, kappa):
    """F(X) = sum a_i kappa_i from precomputed ChowWeights, exact."""
    kappa = tuple(Fraction(k) for k in kappa)
    if len(kappa) != len(cw.a):
        raise LengthMismatch(f"{len(kappa)} eigenvalues for {len(cw.a)} weights")
    return sum(a * k for a, k in zip(cw.a, kappa))


def futaki_of_field(ci, X):
    """Futaki invariant of a complete intersection for a diagonal field.

    Extracts kappa_i per polynomial (raising NotEigenvector with the offending
    polynomial named), and cross-checks the two exact expressions against each
    other before returning.
    """
    if X.num_vars != ci.N + 1:
        raise LengthMismatch(f"field has {X.num_vars} weights, variety needs {ci.N + 1}")
    kappas = []
    for i, F in enumerate(ci.polys, start=1):
        try:
            kappas.append(eigenweight(X, F))
        except NotEigenvector as exc:
            raise NotEigenvector(f"polynomial F_{i}: {exc}", monomials=exc.monomials) from None
    value = futaki_lu(ci.N, ci.degrees, kappas)
    alt = futaki_via_weights(chow_weights(ci.N, ci.degrees), kappas)
    assert value == alt, "Lu formula and Chow-weight expansion disagree"
    return value
