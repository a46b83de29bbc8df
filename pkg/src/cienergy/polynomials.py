"""Homogeneous polynomials, complete intersections, diagonal fields, group elements.

Values are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyPolynomial,
    InvalidDimensions,
    MalformedLine,
    MixedDegree,
    NotEigenvector,
    SingularMatrix,
    ZeroVector,
)

__all__ = [
    "HomogeneousPolynomial",
    "CompleteIntersection",
    "DiagonalField",
    "GroupElement",
    "parse_polynomial",
    "parse_variety",
    "eval_and_gradient",
    "eigenweight",
    "phi_sigma",
    "transform_polynomial",
]


@dataclass(frozen=True)
class HomogeneousPolynomial:
    """Homogeneous polynomial stored as a map exponent-vector -> coefficient.

    Every exponent tuple has length ``num_vars`` and sums to ``degree``;
    zero coefficients are never stored.
    """

    num_vars: int
    degree: int
    terms: dict = field(compare=False)

    def __post_init__(self):
        if not self.terms:
            raise EmptyPolynomial("polynomial has no terms")
        for alpha in self.terms:
            if len(alpha) != self.num_vars:
                raise DimensionMismatch(
                    f"exponent vector {alpha} has length {len(alpha)}, expected {self.num_vars}"
                )
            if sum(alpha) != self.degree:
                raise MixedDegree(
                    f"term {alpha} has degree {sum(alpha)}, expected {self.degree}"
                )

    @classmethod
    def from_terms(cls, terms, num_vars):
        """Build from an iterable of (exponent tuple, coefficient), merging duplicates."""
        merged: dict = {}
        for alpha, c in terms:
            alpha = tuple(int(e) for e in alpha)
            merged[alpha] = merged.get(alpha, 0) + complex(c)
        merged = {a: c for a, c in merged.items() if c != 0}
        if not merged:
            raise EmptyPolynomial("all terms cancelled")
        degrees = {sum(a) for a in merged}
        if len(degrees) > 1:
            lo, hi = min(degrees), max(degrees)
            raise MixedDegree(f"terms of unequal total degree ({hi} vs {lo})")
        return cls(num_vars=int(num_vars), degree=degrees.pop(), terms=merged)

    @cached_property
    def _arrays(self):
        alphas = sorted(self.terms)
        E = np.array(alphas, dtype=np.int64)
        c = np.array([self.terms[a] for a in alphas], dtype=np.complex128)
        return E, c

    @cached_property
    def _gradients(self):
        """Per-variable derivative polynomials (None where the derivative vanishes)."""
        grads = []
        for j in range(self.num_vars):
            terms = []
            for alpha, c in self.terms.items():
                if alpha[j] > 0:
                    beta = list(alpha)
                    beta[j] -= 1
                    terms.append((tuple(beta), alpha[j] * c))
            grads.append(HomogeneousPolynomial.from_terms(terms, self.num_vars) if terms else None)
        return tuple(grads)

    def __call__(self, z):
        """Evaluate at points ``z`` of shape (..., num_vars); returns shape (...)."""
        z = np.asarray(z, dtype=np.complex128)
        if z.shape[-1] != self.num_vars:
            raise DimensionMismatch(
                f"points have {z.shape[-1]} coordinates, expected {self.num_vars}"
            )
        E, c = self._arrays
        shape = z.shape[:-1]
        zf = np.ascontiguousarray(z.reshape(-1, self.num_vars).T)  # (V, P)
        # Power tables in variable-major layout keep the gathers contiguous.
        pw = np.ones((self.num_vars, self.degree + 1, zf.shape[1]), dtype=np.complex128)
        for e in range(1, self.degree + 1):
            np.multiply(pw[:, e - 1], zf, out=pw[:, e])
        prod = pw[0][E[:, 0]].copy()  # (T, P)
        for j in range(1, self.num_vars):
            prod *= pw[j][E[:, j]]
        return (c @ prod).reshape(shape)

    def gradient(self, z):
        """Gradient at points ``z`` of shape (..., num_vars); returns (..., num_vars)."""
        z = np.asarray(z, dtype=np.complex128)
        out = np.zeros(z.shape, dtype=np.complex128)
        for j, g in enumerate(self._gradients):
            if g is not None:
                out[..., j] = g(z)
        return out

    def scaled(self, factor):
        return HomogeneousPolynomial.from_terms(
            ((a, c * factor) for a, c in self.terms.items()), self.num_vars
        )

    def max_coeff(self):
        return max(abs(c) for c in self.terms.values())

    def __repr__(self):
        parts = []
        for alpha in sorted(self.terms):
            c = self.terms[alpha]
            mono = "*".join(f"z{j}^{e}" if e > 1 else f"z{j}" for j, e in enumerate(alpha) if e)
            parts.append(f"({c:g})*{mono}" if mono else f"({c:g})")
        return " + ".join(parts)


class SystemEvaluator:
    """Compiled joint evaluation of several polynomials and all their gradients.

    Shares one monomial table across the whole system so a batched call costs a
    single gather-product plus one small matrix multiply, instead of one pass
    per polynomial per derivative.
    """

    def __init__(self, polys):
        polys = tuple(polys)
        nv = polys[0].num_vars
        cols = {}

        def col(alpha):
            if alpha not in cols:
                cols[alpha] = len(cols)
            return cols[alpha]

        entries = []  # (monomial column, output index, coefficient)
        out = 0
        self.s = len(polys)
        self.num_vars = nv
        for f in polys:
            for alpha, c in f.terms.items():
                entries.append((col(alpha), out, c))
            out += 1
        for f in polys:
            for j in range(nv):
                for alpha, c in f.terms.items():
                    if alpha[j] > 0:
                        beta = list(alpha)
                        beta[j] -= 1
                        entries.append((col(tuple(beta)), out, alpha[j] * c))
                out += 1
        T = len(cols)
        self.E = np.zeros((T, nv), dtype=np.int64)
        for alpha, t in cols.items():
            self.E[t] = alpha
        self.C = np.zeros((T, out), dtype=np.complex128)
        for t, o, c in entries:
            self.C[t, o] += c
        self.max_deg = int(self.E.max()) if T else 0

    def __call__(self, w):
        """Returns (values (..., s), gradients (..., s, num_vars)) at points w."""
        w = np.asarray(w, dtype=np.complex128)
        shape = w.shape[:-1]
        wf = np.ascontiguousarray(w.reshape(-1, self.num_vars).T)  # (V, P)
        pw = np.ones((self.num_vars, self.max_deg + 1, wf.shape[1]), dtype=np.complex128)
        for e in range(1, self.max_deg + 1):
            np.multiply(pw[:, e - 1], wf, out=pw[:, e])
        prod = pw[0][self.E[:, 0]].copy()  # (T, P)
        for j in range(1, self.num_vars):
            prod *= pw[j][self.E[:, j]]
        flat = (self.C.T @ prod).T  # (P, n_out)
        vals = flat[..., : self.s].reshape(shape + (self.s,))
        grads = flat[..., self.s :].reshape(shape + (self.s, self.num_vars))
        return vals, grads


def parse_polynomial(text, num_vars):
    """Parse the term-per-line format ``<re> <im> | <e0> ... <eN>``.

    ``#`` starts a comment; blank lines are skipped; coefficients may be
    decimal or exact rationals like ``1/3``.
    """
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "|" not in line:
            raise MalformedLine(f"line {lineno}: missing '|' separator: {raw!r}")
        coeff_part, exp_part = line.split("|", 1)
        cf = coeff_part.split()
        ef = exp_part.split()
        if len(cf) != 2:
            raise MalformedLine(f"line {lineno}: expected '<re> <im>' before '|': {raw!r}")
        if len(ef) != num_vars:
            raise MalformedLine(
                f"line {lineno}: expected {num_vars} exponents, got {len(ef)}: {raw!r}"
            )
        try:
            re, im = (float(Fraction(v)) for v in cf)
            alpha = tuple(int(e) for e in ef)
        except (ValueError, ZeroDivisionError) as exc:
            raise MalformedLine(f"line {lineno}: {exc}: {raw!r}") from None
        if any(e < 0 for e in alpha):
            raise MalformedLine(f"line {lineno}: negative exponent: {raw!r}")
        terms.append((alpha, complex(re, im)))
    if not terms:
        raise EmptyPolynomial("no terms found")
    return HomogeneousPolynomial.from_terms(terms, num_vars)


@dataclass(frozen=True)
class CompleteIntersection:
    """A complete intersection F_1 = ... = F_s = 0 in projective N-space.

    Smoothness/normality is the caller's assertion; see
    :func:`cienergy.numerics.frames.jacobian_rank_probe` for a probabilistic check.
    """

    N: int
    degrees: tuple
    polys: tuple
    name: str = "variety"

    def __post_init__(self):
        s = len(self.degrees)
        if not (1 <= s <= self.N):
            raise InvalidDimensions(f"need 1 <= s <= N, got s={s}, N={self.N}")
        if len(self.polys) != s:
            raise InvalidDimensions("one polynomial required per degree")
        for d, f in zip(self.degrees, self.polys):
            if f.num_vars != self.N + 1:
                raise DimensionMismatch(
                    f"polynomial in {f.num_vars} variables, expected {self.N + 1}"
                )
            if f.degree != d:
                raise InvalidDimensions(f"declared degree {d} but polynomial has degree {f.degree}")

    @classmethod
    def from_polys(cls, N, polys, name="variety"):
        polys = tuple(polys)
        return cls(N=N, degrees=tuple(f.degree for f in polys), polys=polys, name=name)

    @property
    def s(self):
        return len(self.degrees)

    @property
    def n(self):
        """Dimension of the intersection."""
        return self.N - self.s

    @property
    def m(self):
        """N + 1 - sum of degrees; the anticanonical multiple under adjunction."""
        return self.N + 1 - sum(self.degrees)

    @property
    def D(self):
        """Bezout degree, the product of the defining degrees."""
        out = 1
        for d in self.degrees:
            out *= d
        return out

    @property
    def p(self):
        """p_k = D / d_k for each k."""
        return tuple(self.D // d for d in self.degrees)


def parse_variety(text, name="variety"):
    """Parse a variety file: header ``N=<int> s=<int>`` then s blocks split by '%' lines."""
    lines = text.splitlines()
    header = None
    body_start = 0
    for i, raw in enumerate(lines):
        line = raw.split("#", 1)[0].strip()
        if line:
            header = line
            body_start = i + 1
            break
    if header is None:
        raise MalformedLine("empty variety file")
    fields = dict()
    for tok in header.split():
        if "=" not in tok:
            raise MalformedLine(f"bad header token {tok!r}, expected N=<int> s=<int>")
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        N = int(fields["N"])
        s = int(fields["s"])
    except (KeyError, ValueError):
        raise MalformedLine(f"bad variety header: {header!r}") from None
    blocks, current = [], []
    for raw in lines[body_start:]:
        if raw.split("#", 1)[0].strip() == "%":
            blocks.append("\n".join(current))
            current = []
        else:
            current.append(raw)
    blocks.append("\n".join(current))
    blocks = [b for b in blocks if b.strip(" \n\t")]
    if len(blocks) != s:
        raise MalformedLine(f"header declares s={s} polynomials, found {len(blocks)} blocks")
    polys = tuple(parse_polynomial(b, N + 1) for b in blocks)
    return CompleteIntersection.from_polys(N, polys, name=name)


@dataclass(frozen=True)
class DiagonalField:
    """Diagonal holomorphic vector field with exact rational weights summing to zero."""

    weights: tuple

    def __post_init__(self):
        w = tuple(Fraction(a) for a in self.weights)
        object.__setattr__(self, "weights", w)
        if sum(w) != 0:
            raise InvalidDimensions(f"weights must have exact trace zero, got {sum(w)}")

    @property
    def num_vars(self):
        return len(self.weights)

    def as_floats(self):
        return np.array([float(a) for a in self.weights])

    def generator_matrix(self):
        return np.diag(self.as_floats()).astype(np.complex128)

    def exp(self, t):
        """The one-parameter subgroup element exp(t * diag(weights))."""
        return GroupElement(np.diag(np.exp(t * self.as_floats())).astype(np.complex128))


class GroupElement:
    """An invertible (N+1)x(N+1) complex matrix acting on projective space."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[0] == 0 or sv[-1] / sv[0] < 1e-14:
            raise SingularMatrix("matrix is singular to working precision")
        m.setflags(write=False)
        self.matrix = m
        self.det = complex(np.linalg.det(m))
        self.sl_flag = abs(self.det - 1.0) <= 1e-12

    @property
    def size(self):
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, size):
        return cls(np.eye(size))

    @classmethod
    def diagonal(cls, entries):
        return cls(np.diag(np.asarray(entries, dtype=np.complex128)))

    def inverse(self):
        return GroupElement(np.linalg.inv(self.matrix))

    def is_identity(self):
        return self.matrix.shape[0] == self.matrix.shape[1] and np.array_equal(
            self.matrix, np.eye(self.matrix.shape[0], dtype=np.complex128)
        )

    def __matmul__(self, other):
        if isinstance(other, GroupElement):
            return GroupElement(self.matrix @ other.matrix)
        return NotImplemented

    def __repr__(self):
        return f"GroupElement(size={self.size}, det={self.det:.6g})"


def eval_and_gradient(F, z):
    """Evaluate ``(F(z), grad F(z))``; the Euler identity sum z_j dF/dz_j = d*F holds."""
    z = np.asarray(z, dtype=np.complex128)
    if z.shape[-1] != F.num_vars:
        raise DimensionMismatch(f"point has {z.shape[-1]} coordinates, expected {F.num_vars}")
    return F(z), F.gradient(z)


def eigenweight(X, F):
    """Exact rational eigenvalue kappa with X F = kappa F, via per-monomial weights.

    Raises NotEigenvector naming two monomials with distinct weights.
    """
    if X.num_vars != F.num_vars:
        raise DimensionMismatch(
            f"field on {X.num_vars} variables, polynomial on {F.num_vars}"
        )
    kappa = None
    witness = None
    for alpha in sorted(F.terms):
        w = sum(a * e for a, e in zip(X.weights, alpha))
        if kappa is None:
            kappa, witness = w, alpha
        elif w != kappa:
            raise NotEigenvector(
                f"monomials {witness} and {alpha} have distinct weights {kappa} and {w}",
                monomials=((witness, kappa), (alpha, w)),
            )
    return kappa


def phi_sigma(sigma, z):
    """The potential log(|sigma z|^2 / |z|^2); scale-invariant in z."""
    z = np.asarray(z, dtype=np.complex128)
    nz2 = np.sum(np.abs(z) ** 2, axis=-1)
    if np.any(nz2 == 0):
        raise ZeroVector("phi_sigma undefined at z = 0")
    sz = z @ sigma.matrix.T
    return np.log(np.sum(np.abs(sz) ** 2, axis=-1) / nz2)


COMPOSE = "compose"
COMPOSE_INVERSE = "compose_inverse"


def transform_polynomial(F, sigma, convention=COMPOSE):
    """Return z -> F(sigma z) (compose) or z -> F(sigma^{-1} z) (compose_inverse).

    The substitution is expanded exactly in the monomial basis; degree is preserved.
    """
    if convention == COMPOSE:
        mat = sigma.matrix
    elif convention == COMPOSE_INVERSE:
        mat = np.linalg.inv(sigma.matrix)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    nv = F.num_vars
    if mat.shape[0] != nv:
        raise DimensionMismatch(f"matrix size {mat.shape[0]} != num_vars {nv}")
    # rows of `mat` give the substituted linear forms: z_j -> sum_k mat[j, k] z_k
    out: dict = {}
    zero = tuple([0] * nv)
    for alpha, c in F.terms.items():
        partial = {zero: c}
        for j, e in enumerate(alpha):
            row = mat[j]
            for _ in range(e):
                nxt: dict = {}
                for beta, cb in partial.items():
                    for k in range(nv):
                        ck = row[k]
                        if ck == 0:
                            continue
                        gamma = list(beta)
                        gamma[k] += 1
                        gamma = tuple(gamma)
                        nxt[gamma] = nxt.get(gamma, 0) + cb * ck
                partial = nxt
        for beta, cb in partial.items():
            out[beta] = out.get(beta, 0) + cb
    return HomogeneousPolynomial.from_terms(out.items(), nv)
