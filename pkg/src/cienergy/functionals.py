"""Energy functionals at one-parameter-subgroup potentials phi_sigma.

All three functionals are normalized by the volume [omega^n] = D and evaluated
by a single Monte-Carlo pass per functional, so the reported value is exactly
the stated combination of the per-term estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NonFano, NotEigenvector
from .futaki import futaki_of_field
from .polynomials import eigenweight
from .numerics.forms import mixed_det_multiset, pencil_mixed_coeffs
from .numerics.frames import make_frame
from .numerics.montecarlo import MCEstimate, integrate, integrate_multi
from .numerics.ricci import ricci_batch

__all__ = [
    "FunctionalReport",
    "aubin_yau",
    "futaki_functional",
    "mabuchi",
    "futaki_numeric",
    "orbit_sweep",
]


@dataclass(frozen=True)
class FunctionalReport:
    """Value of a functional together with its per-term estimates.

    ``value.value`` equals the weighted combination of ``terms`` to 1e-12 by
    construction (all terms share one sample stream).
    """

    value: MCEstimate
    terms: dict
    ci_id: str
    sigma_id: str
    samples: int
    seed: int

    def bookkeeping_residual(self, weights):
        total = sum(w * t.value for w, t in zip(weights, self.terms.values()))
        return abs(total - self.value.value)


def _zero_report(ci, sigma_id, Q, names):
    zero = MCEstimate.exact(0.0, seed=Q.seed)
    return FunctionalReport(
        value=zero,
        terms={name: zero for name in names},
        ci_id=ci.name,
        sigma_id=sigma_id,
        samples=0,
        seed=Q.seed,
    )


def _report(ci, sigma_id, Q, combined, per_term):
    return FunctionalReport(
        value=combined,
        terms=per_term,
        ci_id=ci.name,
        sigma_id=sigma_id,
        samples=Q.samples,
        seed=Q.seed,
    )


def aubin_yau(ci, sigma, Q, frame=None, shift=0.0, sigma_id="sigma"):
    """Aubin-Yau functional (1/D) sum_{k=0..n} int_M phi omega^{n-k} omega_phi^k.

    ``shift`` adds a constant to the potential (the constant-shift law adds
    (n+1)*shift to the value).
    """
    n, D = ci.n, ci.D
    if sigma.is_identity() and shift == 0.0:
        return _zero_report(ci, sigma_id, Q, [f"power_{k}" for k in range(n + 1)])
    if frame is None:
        frame = make_frame(ci, Q.seed)
    sig_rot = frame.rotate_group(sigma)

    def integrand(batch):
        phi = batch.phi(sig_rot) + shift
        g = batch.fs_pullback()
        gphi = batch.pushed_pullback(sig_rot)
        md = pencil_mixed_coeffs(g, gphi, n)  # md[k] = MD(g^(n-k), gphi^(k))
        dens = np.moveaxis(md, 0, -1) / batch.base_det[:, None, None]
        return phi[..., None] * dens

    names = [f"power_{k}" for k in range(n + 1)]
    combined, per_term = integrate_multi(
        ci, integrand, Q, weights=np.full(n + 1, 1.0 / D), names=names, frame=frame
    )
    return _report(ci, sigma_id, Q, combined, per_term)


def futaki_functional(ci, sigma, Q, frame=None, sigma_id="sigma"):
    """Futaki functional (1/D) sum_k int_M phi Ric(omega)^{n-k} Ric(omega_phi)^k."""
    n, D = ci.n, ci.D
    if sigma.is_identity():
        return _zero_report(ci, sigma_id, Q, [f"power_{k}" for k in range(n + 1)])
    if frame is None:
        frame = make_frame(ci, Q.seed)
    sig_rot = frame.rotate_group(sigma)

    def integrand(batch):
        phi = batch.phi(sig_rot)
        ric, ok = ricci_batch(ci, frame, batch, None, Q.fd_step, Q.richardson)
        ric_phi, ok_phi = ricci_batch(ci, frame, batch, sig_rot, Q.fd_step, Q.richardson)
        md = pencil_mixed_coeffs(ric, ric_phi, n)
        dens = np.moveaxis(md, 0, -1) / batch.base_det[:, None, None]
        out = phi[..., None] * dens
        out[~(ok & ok_phi)] = np.nan
        return out

    names = [f"power_{k}" for k in range(n + 1)]
    combined, per_term = integrate_multi(
        ci, integrand, Q, weights=np.full(n + 1, 1.0 / D), names=names, frame=frame
    )
    return _report(ci, sigma_id, Q, combined, per_term)


def mabuchi(ci, sigma, Q, frame=None, shift=0.0, sigma_id="sigma"):
    """Mabuchi K-energy at phi_sigma (+ optional constant shift).

    nu = (1/D) [ int log(omega_phi^n/omega^n) omega_phi^n
                 - sum_{i<n} int phi Ric(omega) omega_phi^i omega^{n-1-i}
                 + (n m/(n+1)) sum_{i<=n} int phi omega_phi^i omega^{n-i} ].
    """
    n, D, m = ci.n, ci.D, ci.m
    names = (
        ["entropy"]
        + [f"ricci_{i}" for i in range(n)]
        + [f"const_{i}" for i in range(n + 1)]
    )
    if sigma.is_identity() and shift == 0.0:
        return _zero_report(ci, sigma_id, Q, names)
    if frame is None:
        frame = make_frame(ci, Q.seed)
    sig_rot = frame.rotate_group(sigma)
    kconst = float(Fraction(n) * Fraction(m) / (n + 1))
    weights = np.concatenate([[1.0], -np.ones(n), np.full(n + 1, kconst)]) / D

    def integrand(batch):
        phi = batch.phi(sig_rot) + shift
        g = batch.fs_pullback()
        gphi = batch.pushed_pullback(sig_rot)
        det_g = np.linalg.det(g).real
        det_gphi = np.linalg.det(gphi).real
        base = batch.base_det[:, None]
        parts = []
        # entropy term against omega_phi^n; non-positive densities reject the sample
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where((det_gphi > 0) & (det_g > 0), det_gphi / det_g, np.nan)
            parts.append(np.log(ratio) * det_gphi / base)
        ric, ok = ricci_batch(ci, frame, batch, None, Q.fd_step, Q.richardson)
        for i in range(n):
            md = mixed_det_multiset([(ric, 1), (gphi, i), (g, n - 1 - i)])
            parts.append(phi * md / base)
        md_pow = pencil_mixed_coeffs(g, gphi, n)
        for i in range(n + 1):
            parts.append(phi * md_pow[i] / base)
        out = np.stack(parts, axis=-1)
        out[~ok] = np.nan
        return out

    combined, per_term = integrate_multi(ci, integrand, Q, weights=weights, names=names, frame=frame)
    return _report(ci, sigma_id, Q, combined, per_term)


def futaki_numeric(ci, X, Q, frame=None):
    """Futaki invariant by direct integration: (n+1) m^{n+1} int_M theta_X omega_FS^n.

    theta_X = 2 Re(z^dagger diag(a) z)/|z|^2 is the potential derivative of the
    orbit sigma_t = exp(t diag(a)); the energy-derivative telescoping supplies
    the (n+1), and the admissible class c_1(K^{-1}) = m [omega_FS] the m^{n+1}
    (so m <= 0 is refused).  Compare with futaki_of_field: the ratio C0 equals
    1 whenever boundary terms at the singular locus vanish (e.g. the quadric
    cone), but genuinely differs on worse-than-klt singularities such as the
    cone over an elliptic curve.
    """
    if ci.m <= 0:
        raise NonFano(f"m = {ci.m} <= 0: the admissible class degenerates")
    for i, F in enumerate(ci.polys, start=1):
        try:
            eigenweight(X, F)
        except NotEigenvector as exc:
            raise NotEigenvector(f"polynomial F_{i}: {exc}", monomials=exc.monomials) from None
    if frame is None:
        frame = make_frame(ci, Q.seed)
    a_rot = frame.U.conj().T @ X.generator_matrix() @ frame.U
    n = ci.n

    def integrand(batch):
        w = batch.w_hat
        theta = 2.0 * np.real(np.einsum("...j,jk,...k->...", np.conj(w), a_rot, w))
        g = batch.fs_pullback()
        return theta * np.linalg.det(g).real / batch.base_det[:, None]

    est = integrate(ci, integrand, Q, frame=frame)
    return est.scaled((n + 1) * float(ci.m) ** (n + 1))


def orbit_sweep(ci, X, t_grid, Q, include_mabuchi=True):
    """Functionals along sigma_t = exp(t diag(a)); one frame and seed across t.

    Returns a list of (t, aubin_yau report, mabuchi report or None) rows.
    """
    for i, F in enumerate(ci.polys, start=1):
        try:
            eigenweight(X, F)
        except NotEigenvector as exc:
            raise NotEigenvector(f"polynomial F_{i}: {exc}", monomials=exc.monomials) from None
    frame = make_frame(ci, Q.seed)
    rows = []
    for t in t_grid:
        sigma = X.exp(float(t))
        sid = f"exp({t:g}*X)"
        ay = aubin_yau(ci, sigma, Q, frame=frame, sigma_id=sid)
        nu = mabuchi(ci, sigma, Q, frame=frame, sigma_id=sid) if include_mabuchi else None
        rows.append((float(t), ay, nu))
    return rows
