"""Norms on defining polynomials, the adjunction density, and the identity checks.

Two conventions are deliberately left open and fixed empirically by
:func:`calibrate` (see the calibration record):

* ``convention``: whether F^sigma means F composed with sigma or sigma^{-1};
* ``variant``: the level-sum weights/domains.  ``derivation`` follows the
  energy-expansion weights d_{k+1}...d_s over X_{k-1} (equivalently p_k-weighted
  averages over X_{k-1}); ``literal`` takes the displayed equations at face
  value: weights p_k/V_k over X_{k-1} for the plain norm, and p_k-weighted
  top-degree averages over X_k for the degenerate norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CalibrationAmbiguous,
    CalibrationFailed,
    NotSpecialLinear,
    ZeroGradientOnVariety,
)
from .functionals import aubin_yau, mabuchi
from .polynomials import (
    COMPOSE,
    COMPOSE_INVERSE,
    CompleteIntersection,
    GroupElement,
    transform_polynomial,
)
from .numerics.fibers import frame_evaluator
from .numerics.frames import AmbientSpace, make_frame
from .numerics.montecarlo import MCEstimate, integrate
from .numerics.ricci import ricci_batch  # noqa: F401  (re-exported for verify suites)

__all__ = [
    "LITERAL",
    "DERIVATION",
    "NormBreakdown",
    "log_norm_a",
    "log_norm_m",
    "adjunction_density",
    "adjunction_density_batch",
    "verify_theorem5",
    "verify_theorem6",
    "calibrate",
    "CalibrationRecord",
]

LITERAL = "literal"
DERIVATION = "derivation"


@dataclass(frozen=True)
class NormBreakdown:
    """A log-norm with its per-level and per-adjunction contributions.

    ``log_norm`` equals the recorded weighted sum of terms to 1e-12.  For the
    plain norm the value is log ||F||_A; for the degenerate norm it is
    log ||F||_M^2 (matching the squared form of the source equation).
    """

    log_norm: float
    stderr: float
    per_level_terms: tuple
    adjunction_terms: tuple
    weight_variant: str
    samples: int
    seed: int

    def check_bookkeeping(self):
        total = sum(w * t.value for w, t in self.per_level_terms)
        total += sum(w * t.value for w, t in self.adjunction_terms)
        return abs(total - self.log_norm)


def _level_system(ci, k, name_suffix=""):
    """X_{k-1}: the sub-intersection of the first k-1 polynomials (P^N for k=1)."""
    if k == 1:
        return AmbientSpace(ci.N, name=f"{ci.name}/P^N")
    return CompleteIntersection.from_polys(
        ci.N, ci.polys[: k - 1], name=f"{ci.name}/X_{k - 1}{name_suffix}"
    )


def _level_log_integral(ci, k, domain, Q, squared=False):
    """MC estimate of int_domain log(|F_k(z)|^p / |z|^{p d_k}) omega^top, p = 1 or 2.

    The domain is X_{k-1} or X_k; the form degree is always the top degree of
    the domain.  Samples landing exactly on the zero set of F_k are rejected
    and counted (log -> -inf).
    """
    frame = make_frame(domain, Q.seed)
    gk = transform_polynomial(ci.polys[k - 1], GroupElement(frame.U), COMPOSE)
    power = 2.0 if squared else 1.0

    def integrand(batch):
        g = batch.fs_pullback()
        dens = np.linalg.det(g).real / batch.base_det[:, None]
        vals = gk(batch.w_hat)
        with np.errstate(divide="ignore"):
            lg = power * np.log(np.abs(vals))
        return lg * dens

    return integrate(domain, integrand, Q, frame=frame)


def _derivation_weights(ci):
    """d_{k+1}...d_s for k = 1..s."""
    out = []
    for k in range(1, ci.s + 1):
        w = 1
        for d in ci.degrees[k:]:
            w *= d
        out.append(w)
    return out


def log_norm_a(ci, Q, variant=DERIVATION):
    """log ||F||_A: the level sum of log|F_k|/|z|^{d_k} integrals over X_{k-1}.

    derivation: weights d_{k+1}...d_s (the norm shifts by exactly p_k log|c|
    when F_k is scaled by c); literal: weights p_k/V_k as displayed.
    """
    V = [1]
    for d in ci.degrees:
        V.append(V[-1] * d)
    if variant == DERIVATION:
        weights = [float(w) for w in _derivation_weights(ci)]
    elif variant == LITERAL:
        weights = [p / v for p, v in zip(ci.p, V[1:])]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    terms = []
    for k in range(1, ci.s + 1):
        domain = _level_system(ci, k)
        est = _level_log_integral(ci, k, domain, Q)
        terms.append((weights[k - 1], est))
    value = sum(w * t.value for w, t in terms)
    stderr = float(np.sqrt(sum((w * t.stderr) ** 2 for w, t in terms)))
    return NormBreakdown(
        log_norm=value,
        stderr=stderr,
        per_level_terms=tuple(terms),
        adjunction_terms=(),
        weight_variant=variant,
        samples=Q.samples,
        seed=Q.seed,
    )


def adjunction_density_batch(ci, frame, batch, i):
    """Adjunction densities of level i at every branch point: (B, D) array.

    The density at p is |V^T grad F_i|^2 / ((N-i+1) |z|^{2 d_i}) with V an
    orthonormal basis of the tangent space of X_{i-1} at p (the nullspace of
    the earlier gradients and the Euler direction); representatives are unit
    so the |z| factor drops.
    """
    w = batch.w_hat
    _, grads = frame_evaluator(frame)(w)  # (B, D, s, V)
    rows = np.concatenate([grads[..., : i - 1, :], np.conj(w)[..., None, :]], axis=-2)
    # nullspace via full SVD of the small row systems
    _, sv, vh = np.linalg.svd(rows)
    r = rows.shape[-2]
    basis = np.conj(np.swapaxes(vh[..., r:, :], -1, -2))  # (B, D, V, V-r)
    c = np.swapaxes(basis, -1, -2) @ grads[..., i - 1, :][..., None]
    dim = ci.N - i + 1
    dens = np.sum(np.abs(c[..., 0]) ** 2, axis=-1) / dim
    return dens


def adjunction_density(ci, i, bp, frame):
    """Adjunction density of level i at a single branch point (must lie on M)."""
    from .numerics.montecarlo import BranchBatch, chart_det
    from .numerics.fibers import BranchData

    u = np.asarray(bp.u)[None, :]
    y = np.asarray(bp.y)[None, None, :]
    w = np.asarray(bp.z, dtype=np.complex128)[None, None, :]
    norm = np.linalg.norm(w, axis=-1)
    data = BranchData(
        u=u, y=y, w_hat=w / norm[..., None],
        lift=np.asarray(bp.L)[None, None] / norm[..., None, None],
        cond=np.array([[bp.cond]]), valid=np.array([True]),
    )
    batch = BranchBatch(system=ci, frame=frame, data=data, base_det=chart_det(u))
    dens = float(adjunction_density_batch(ci, frame, batch, i)[0, 0])
    if dens <= 1e-14:
        raise ZeroGradientOnVariety(
            f"level-{i} adjunction density vanishes: the variety is singular here"
        )
    return dens


def log_norm_m(ci, Q, variant=DERIVATION):
    """log ||F||_M^2: the degenerate-norm combination of level and adjunction terms.

    Value = -(m/((n+1)d)) * [level sum per variant, squared logs]
            + (1/d) * sum_i int_M log(density_i) omega^n.
    """
    n, D, m = ci.n, ci.D, ci.m
    V = [1]
    for d in ci.degrees:
        V.append(V[-1] * d)
    level_terms = []
    if m != 0:
        pref = -float(m) / ((n + 1) * D)
        for k in range(1, ci.s + 1):
            if variant == DERIVATION:
                domain = _level_system(ci, k)
                est = _level_log_integral(ci, k, domain, Q, squared=True)
                weight = pref * float(_derivation_weights(ci)[k - 1])
            elif variant == LITERAL:
                domain = CompleteIntersection.from_polys(
                    ci.N, ci.polys[:k], name=f"{ci.name}/X_{k}"
                )
                est = _level_log_integral(ci, k, domain, Q, squared=True)
                weight = pref * ci.p[k - 1] / V[k]
            else:
                raise ValueError(f"unknown variant {variant!r}")
            level_terms.append((weight, est))

    frame = make_frame(ci, Q.seed)
    adj_terms = []
    for i in range(1, ci.s + 1):
        def integrand(batch, _i=i):
            g = batch.fs_pullback()
            dens_form = np.linalg.det(g).real / batch.base_det[:, None]
            ad = adjunction_density_batch(ci, frame, batch, _i)
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(ad > 0, np.log(np.where(ad > 0, ad, 1.0)), np.nan)
            return lg * dens_form

        est = integrate(ci, integrand, Q, frame=frame)
        adj_terms.append((1.0 / D, est))

    value = sum(w * t.value for w, t in level_terms) + sum(w * t.value for w, t in adj_terms)
    stderr = float(
        np.sqrt(
            sum((w * t.stderr) ** 2 for w, t in level_terms)
            + sum((w * t.stderr) ** 2 for w, t in adj_terms)
        )
    )
    return NormBreakdown(
        log_norm=value,
        stderr=stderr,
        per_level_terms=tuple(level_terms),
        adjunction_terms=tuple(adj_terms),
        weight_variant=variant,
        samples=Q.samples,
        seed=Q.seed,
    )


def transformed_intersection(ci, sigma, convention):
    """The complete intersection cut out by the transformed tuple F^sigma."""
    polys = tuple(transform_polynomial(f, sigma, convention) for f in ci.polys)
    return CompleteIntersection.from_polys(ci.N, polys, name=f"{ci.name}^sigma")


@dataclass(frozen=True)
class ResidualReport:
    """One identity check: lhs (functional) vs rhs (norm difference)."""

    lhs: float
    rhs: float
    residual: float
    stderr: float
    tolerance: float
    passed: bool
    convention: str
    variant: str
    ci_id: str
    sigma_id: str

    @property
    def scale(self):
        return max(abs(self.lhs), abs(self.rhs))


def _tolerance(lhs, rhs, stderr, rel, floor=1e-3):
    scale = max(abs(lhs), abs(rhs), floor)
    return max(3.0 * stderr, rel * scale)


def verify_theorem5(ci, sigma, Q, convention=COMPOSE, variant=DERIVATION, sigma_id="sigma"):
    """Residual of AY(phi_sigma) = (1/D) [log||F^sigma||_A^2 - log||F||_A^2]."""
    ay = aubin_yau(ci, sigma, Q, sigma_id=sigma_id)
    ci_s = transformed_intersection(ci, sigma, convention)
    na = log_norm_a(ci, Q, variant)
    nb = log_norm_a(ci_s, Q, variant)
    rhs = 2.0 * (nb.log_norm - na.log_norm) / ci.D
    r = ay.value.value - rhs
    stderr = float(np.hypot(ay.value.stderr, 2.0 * np.hypot(na.stderr, nb.stderr) / ci.D))
    tol = _tolerance(ay.value.value, rhs, stderr, 0.02)
    return ResidualReport(
        lhs=ay.value.value, rhs=rhs, residual=r, stderr=stderr, tolerance=tol,
        passed=abs(r) <= tol, convention=convention, variant=variant,
        ci_id=ci.name, sigma_id=sigma_id,
    )


def verify_theorem6(ci, sigma, Q, convention=COMPOSE, variant=DERIVATION, sigma_id="sigma"):
    """Residual of nu(phi_sigma) = log||F^sigma||_M^2 - log||F||_M^2 on SL(N+1)."""
    if not sigma.sl_flag:
        raise NotSpecialLinear(f"det sigma = {sigma.det:.6g}: the identity needs SL(N+1)")
    nu = mabuchi(ci, sigma, Q, sigma_id=sigma_id)
    ci_s = transformed_intersection(ci, sigma, convention)
    na = log_norm_m(ci, Q, variant)
    nb = log_norm_m(ci_s, Q, variant)
    rhs = nb.log_norm - na.log_norm
    r = nu.value.value - rhs
    stderr = float(np.hypot(nu.value.stderr, np.hypot(na.stderr, nb.stderr)))
    tol = _tolerance(nu.value.value, rhs, stderr, 0.03)
    return ResidualReport(
        lhs=nu.value.value, rhs=rhs, residual=r, stderr=stderr, tolerance=tol,
        passed=abs(r) <= tol, convention=convention, variant=variant,
        ci_id=ci.name, sigma_id=sigma_id,
    )


@dataclass(frozen=True)
class CalibrationRecord:
    convention: str
    variant: str
    evidence: tuple  # rows (ci_id, sigma_id, convention, variant, theorem, residual, tolerance, passed)

    def to_text(self):
        lines = [
            "# calibration record: empirically selected conventions",
            f"convention = {self.convention}",
            f"variant = {self.variant}",
            "# evidence: ci, sigma, convention, variant, theorem, residual, tolerance, passed",
        ]
        for row in self.evidence:
            lines.append("# " + ", ".join(str(x) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        fields = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line or "=" not in line:
                continue
            k, v = (p.strip() for p in line.split("=", 1))
            fields[k] = v
        if "convention" not in fields or "variant" not in fields:
            raise CalibrationFailed("calibration file is missing convention/variant keys")
        return cls(convention=fields["convention"], variant=fields["variant"], evidence=())


def calibrate(ci_suite, sigma_suite, Q, check_theorem6=True):
    """Select the unique (convention, variant) passing Theorems 5/6 on the suite.

    The sigma suite must contain non-unitary elements (otherwise every
    combination passes trivially and the calibration is ambiguous).
    """
    if not ci_suite or not sigma_suite:
        raise CalibrationFailed("calibration needs at least one variety and one sigma")
    nontrivial = [
        s for s in sigma_suite
        if np.abs(s.matrix @ s.matrix.conj().T - np.eye(s.size)).max() > 1e-10
    ]
    if not nontrivial:
        raise CalibrationAmbiguous("all calibration group elements are unitary")
    evidence = []
    passing = []
    for convention in (COMPOSE, COMPOSE_INVERSE):
        for variant in (LITERAL, DERIVATION):
            ok = True
            for ci in ci_suite:
                for j, sigma in enumerate(nontrivial):
                    rep = verify_theorem5(ci, sigma, Q, convention, variant, sigma_id=f"s{j}")
                    evidence.append(
                        (ci.name, f"s{j}", convention, variant, "theorem5",
                         f"{rep.residual:.3e}", f"{rep.tolerance:.3e}", rep.passed)
                    )
                    ok = ok and rep.passed
                    if check_theorem6 and sigma.sl_flag:
                        rep6 = verify_theorem6(ci, sigma, Q, convention, variant, sigma_id=f"s{j}")
                        evidence.append(
                            (ci.name, f"s{j}", convention, variant, "theorem6",
                             f"{rep6.residual:.3e}", f"{rep6.tolerance:.3e}", rep6.passed)
                        )
                        ok = ok and rep6.passed
            if ok:
                passing.append((convention, variant))
    if not passing:
        # diagnostic: best-fit multiplier of the winning-convention candidates
        raise CalibrationFailed(
            "no (convention, variant) combination passes; evidence: "
            + "; ".join(",".join(map(str, row)) for row in evidence)
        )
    if len(passing) > 1:
        raise CalibrationAmbiguous(
            f"multiple combinations pass: {passing}; use non-unitary sigmas farther from identity"
        )
    convention, variant = passing[0]
    return CalibrationRecord(convention=convention, variant=variant, evidence=tuple(evidence))
