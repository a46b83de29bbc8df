"""(1,1)-forms as Hermitian coefficient matrices, and their mixed determinants.

Convention, fixed project-wide: a (1,1)-form alpha = (i/2pi) sum A_jk du_j dubar_k
is represented by the Hermitian matrix with entries A_jk = d^2 f / (dubar_j du_k)
for a local potential f.  With the reference measure mu = prod_j dx_j dy_j / pi,

    alpha_1 ^ ... ^ alpha_n = n! * MixedDet(A_1, ..., A_n) * mu.

Under a holomorphic change of coordinates with Jacobian J this representation
pulls back by A -> J^dagger A J, which is why all pullbacks below are plain
congruences.  All functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb, factorial

import numpy as np

from ..errors import DimensionMismatch, ZeroVector

__all__ = [
    "FormMatrix",
    "fs_ambient",
    "fs_pushed",
    "pullback_form",
    "mixed_det",
    "mixed_det_multiset",
    "pencil_mixed_coeffs",
]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FormMatrix:
    """Validated Hermitian coefficient matrix of a (1,1)-form in chart coordinates.

    ``A`` may carry leading batch dimensions; the trailing two axes are the
    matrix.  ``convention`` records the normalization described in the module
    docstring.
    """

    A: np.ndarray
    convention: str = "i/2pi * conj-hessian"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.complex128)
        if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
            raise DimensionMismatch(f"expected square trailing axes, got shape {A.shape}")
        scale = np.max(np.abs(A)) if A.size else 0.0
        skew = np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2)))) if A.size else 0.0
        if skew > HERMITIAN_TOL * max(1.0, scale):
            raise DimensionMismatch(f"matrix is not Hermitian (residue {skew:.3e})")
        object.__setattr__(self, "A", A)

    @property
    def dim(self):
        return self.A.shape[-1]


def _as_matrix(a):
    return a.A if isinstance(a, FormMatrix) else np.asarray(a, dtype=np.complex128)


def fs_ambient(z):
    """Fubini-Study matrix (|z|^2 I - z z^dagger)/|z|^4 at ambient points ``z``.

    This is the coefficient matrix of (i/2pi) ddbar log|z|^2 in the affine lift;
    its kernel is the scale direction z.
    """
    z = np.asarray(z, dtype=np.complex128)
    nz2 = np.sum(np.abs(z) ** 2, axis=-1)
    if np.any(nz2 == 0):
        raise ZeroVector("Fubini-Study form undefined at z = 0")
    outer = z[..., :, None] * np.conj(z[..., None, :])
    eye = np.eye(z.shape[-1], dtype=np.complex128)
    return (nz2[..., None, None] * eye - outer) / nz2[..., None, None] ** 2


def fs_pushed(sigma, z):
    """Matrix of (i/2pi) ddbar log|sigma z|^2, the pushed form omega_{phi_sigma}."""
    mat = sigma.matrix if hasattr(sigma, "matrix") else np.asarray(sigma, dtype=np.complex128)
    z = np.asarray(z, dtype=np.complex128)
    sz = z @ mat.T
    return np.conj(mat.T) @ fs_ambient(sz) @ mat


def pullback_form(z, L, A_ambient):
    """Restrict an ambient Hermitian form to a branch: returns L^dagger A L.

    ``z`` is the ambient point the form is attached to (used for shape checks
    only; the congruence itself is point-free).
    """
    L = np.asarray(L, dtype=np.complex128)
    A = _as_matrix(A_ambient)
    z = np.asarray(z, dtype=np.complex128)
    if L.shape[-2] != A.shape[-1] or z.shape[-1] != A.shape[-1]:
        raise DimensionMismatch(
            f"incompatible shapes: z {z.shape}, L {L.shape}, A {A.shape}"
        )
    return np.conj(np.swapaxes(L, -1, -2)) @ A @ L


def fs_pullback_gram(w_hat, lift):
    """Pullback of the FS form at unit representatives via the Gram form.

    Equal to L^dagger (I - w w^dagger) L but computed as M^dagger M with
    M = L - w (w^dagger L), which is positive semidefinite by construction and
    avoids the cancellation of the direct congruence at far-chart points.
    """
    w_hat = np.asarray(w_hat, dtype=np.complex128)
    lift = np.asarray(lift, dtype=np.complex128)
    inner = np.conj(w_hat)[..., None, :] @ lift
    m = lift - w_hat[..., :, None] * inner
    return np.conj(np.swapaxes(m, -1, -2)) @ m


def fs_pushed_pullback_gram(sigma_matrix, w_hat, lift):
    """Pullback of the sigma-pushed FS form, in the same cancellation-free form."""
    sig = np.asarray(sigma_matrix, dtype=np.complex128)
    v = w_hat @ sig.T
    sl = sig @ lift
    nv = np.linalg.norm(v, axis=-1)[..., None]
    v_hat = v / nv
    inner = np.conj(v_hat)[..., None, :] @ sl
    m = (sl - v_hat[..., :, None] * inner) / nv[..., None]
    return np.conj(np.swapaxes(m, -1, -2)) @ m


def chart_fs_matrix(u):
    """Closed-form FS chart matrix on P^n at u (our storage convention)."""
    u = np.asarray(u, dtype=np.complex128)
    q = 1.0 + np.sum(np.abs(u) ** 2, axis=-1)[..., None, None]
    outer = u[..., :, None] * np.conj(u[..., None, :])
    eye = np.eye(u.shape[-1], dtype=np.complex128)
    return (q * eye - outer) / q**2


def _check_real(values, scale):
    resid = np.max(np.abs(values.imag)) if values.size else 0.0
    if resid > 1e-12 * max(1.0, scale):
        raise DimensionMismatch(f"mixed determinant has imaginary residue {resid:.3e}")
    return values.real


def mixed_det(mats):
    """Mixed determinant of n Hermitian n x n matrices (batched).

    Computed by determinant polarization over subsets,
    MD(A_1..A_n) = (1/n!) sum_{S != empty} (-1)^{n-|S|} det(sum_{i in S} A_i),
    which agrees with the symmetrized permutation formula.  For n = 0 the empty
    product is 1.
    """
    mats = [_as_matrix(a) for a in mats]
    n = len(mats)
    if n == 0:
        return np.float64(1.0)
    for a in mats:
        if a.shape[-1] != n or a.shape[-2] != n:
            raise DimensionMismatch(f"expected {n} matrices of size {n}x{n}, got {a.shape}")
    acc = None
    for picks in product([0, 1], repeat=n):
        k = sum(picks)
        if k == 0:
            continue
        s = sum(m for take, m in zip(picks, mats) if take)
        term = (-1) ** (n - k) * np.linalg.det(s)
        acc = term if acc is None else acc + term
    acc = acc / factorial(n)
    scale = max(float(np.max(np.abs(a))) for a in mats)
    return _check_real(np.asarray(acc), scale**n)


def mixed_det_multiset(entries):
    """Mixed determinant of a multiset [(matrix, multiplicity), ...], batched.

    Collapses the subset polarization by multiplicity so repeated slots cost a
    binomial factor instead of an exponential number of determinants.
    """
    entries = [(_as_matrix(a), int(mult)) for a, mult in entries if int(mult) > 0]
    n = sum(mult for _, mult in entries)
    if n == 0:
        return np.float64(1.0)
    ranges = [range(m + 1) for _, m in entries]
    acc = None
    for counts in product(*ranges):
        k = sum(counts)
        if k == 0:
            continue
        weight = (-1) ** (n - k)
        for (_, mult), c in zip(entries, counts):
            weight *= comb(mult, c)
        s = sum(c * a for c, (a, _) in zip(counts, entries) if c)
        term = weight * np.linalg.det(s)
        acc = term if acc is None else acc + term
    acc = acc / factorial(n)
    scale = max(float(np.max(np.abs(a))) for a, _ in entries)
    return _check_real(np.asarray(acc), scale**n)


def pencil_mixed_coeffs(A, B, n):
    """All mixed determinants MD(A^(n-k), B^(k)) for k = 0..n in one pass.

    Uses det(A + tB) = sum_k t^k binom(n,k) MD(A^(n-k), B^(k)), interpolated at
    the integer nodes t = 0..n.  Returns an array of shape (n+1,) + batch.
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    if n == 0:
        return np.ones((1,) + A.shape[:-2])
    nodes = np.arange(n + 1, dtype=np.float64)
    dets = np.stack([np.linalg.det(A + t * B) for t in nodes])
    vander = np.vander(nodes, increasing=True)
    coeffs = np.tensordot(np.linalg.inv(vander), dets, axes=(1, 0))
    binoms = np.array([comb(n, k) for k in range(n + 1)], dtype=np.float64)
    md = coeffs / binoms.reshape((n + 1,) + (1,) * (dets.ndim - 1))
    scale = max(float(np.max(np.abs(A))), float(np.max(np.abs(B))), 1e-300)
    return _check_real(md, scale**n)
