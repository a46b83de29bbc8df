"""Fiber solving over base charts: all D branch points above each base sample.

s = 1 uses companion-matrix eigenvalues of the univariate fiber polynomial;
s >= 2 uses total-degree homotopy continuation with the gamma trick (Euler
predictor, Newton corrector, adaptive step).  Everything is vectorized across
base samples; per-sample failures are reported through validity masks rather
than exceptions so the Monte-Carlo layer can reject and count them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegreeDeficit, PathFailure
from ..polynomials import SystemEvaluator

__all__ = ["BranchPoint", "BranchData", "branch_data", "solve_fiber", "continue_branch"]

RESIDUAL_TOL = 1e-10
ENDGAME_TOL = 1e-12
MERGE_TOL = 1e-8


@dataclass(frozen=True)
class BranchPoint:
    """One point of the variety presented as a branch of the cover over P^n.

    ``z`` is the ambient representative in the rotated frame, unnormalized
    (z = (1, u, y)); ``L`` is the lift Jacobian dz/du with base block [0; I_n]
    and fiber block from the implicit function theorem; ``cond`` estimates the
    conditioning of the fiber Jacobian dF/dy.
    """

    u: np.ndarray
    y: np.ndarray
    z: np.ndarray
    L: np.ndarray
    cond: float


@dataclass
class BranchData:
    """Vectorized branch points over a batch of base samples.

    ``w_hat`` and ``lift`` are jointly normalized by |z| (the density formulas
    are invariant under that joint rescaling); ``valid`` marks base samples
    whose full fiber was solved to tolerance with acceptable conditioning.
    """

    u: np.ndarray        # (B, n)
    y: np.ndarray        # (B, D, s)
    w_hat: np.ndarray    # (B, D, N+1), unit norm
    lift: np.ndarray     # (B, D, N+1, n), normalized consistently with w_hat
    cond: np.ndarray     # (B, D)
    valid: np.ndarray    # (B,) bool

    @property
    def counts(self):
        return self.u.shape[0], self.y.shape[1]

    def point(self, i, j):
        z = np.concatenate([[1.0], self.u[i], self.y[i, j]]).astype(np.complex128)
        scale = np.linalg.norm(z)
        return BranchPoint(
            u=self.u[i],
            y=self.y[i, j],
            z=z,
            L=self.lift[i, j] * scale,
            cond=float(self.cond[i, j]),
        )


def assemble_points(u, y):
    """Rotated representatives w = (1, u, y) for u of shape (B, n), y of shape (B, D, s)."""
    B, D, s = y.shape
    n = u.shape[1]
    w = np.empty((B, D, n + s + 1), dtype=np.complex128)
    w[..., 0] = 1.0
    w[..., 1 : n + 1] = u[:, None, :]
    w[..., n + 1 :] = y
    return w


def _batch_solve(mats, rhs):
    """Batched linear solve that tolerates singular members (they get junk
    solutions and a True entry in the returned mask instead of raising).

    Sizes 1 and 2 use closed forms; LAPACK overhead dominates them otherwise.
    """
    k = mats.shape[-1]
    if k == 1:
        a = mats[..., 0, 0]
        bad = (a == 0) | ~np.isfinite(a)
        sol = rhs / np.where(bad, 1.0, a)[..., None, None]
    elif k == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, d = mats[..., 1, 0], mats[..., 1, 1]
        det = a * d - b * c
        bad = (det == 0) | ~np.isfinite(det)
        det = np.where(bad, 1.0, det)
        r0, r1 = rhs[..., 0, :], rhs[..., 1, :]
        sol = np.stack(
            [(d[..., None] * r0 - b[..., None] * r1) / det[..., None],
             (-c[..., None] * r0 + a[..., None] * r1) / det[..., None]],
            axis=-2,
        )
    else:
        det = np.linalg.det(mats)
        bad = ~np.isfinite(det) | (det == 0)
        if np.any(bad):
            mats = mats.copy()
            mats[bad] = np.eye(mats.shape[-1])
        sol = np.linalg.solve(mats, rhs)
    good = np.isfinite(sol).all(axis=tuple(range(mats.ndim - 2, sol.ndim)))
    return sol, bad | ~good


def frame_evaluator(frame):
    """Compiled evaluator of the frame's rotated system (cached on the frame)."""
    ev = getattr(frame, "_evaluator_cache", None)
    if ev is None:
        ev = SystemEvaluator(frame.rotated)
        object.__setattr__(frame, "_evaluator_cache", ev)
    return ev


def _residual_ok(system, frame, w, tol=RESIDUAL_TOL):
    vals, _ = frame_evaluator(frame)(w)
    norms = np.linalg.norm(w, axis=-1)
    scales = np.stack(
        [g.max_coeff() * norms**d for g, d in zip(frame.rotated, system.degrees)], axis=-1
    )
    return np.all(np.abs(vals) <= tol * scales, axis=-1)


def newton_refine(ev, u, y, iters=4):
    """Newton iterations on the fiber system at fixed base points (vectorized)."""
    n = u.shape[1]
    for _ in range(iters):
        w = assemble_points(u, y)
        vals, grads = ev(w)
        jy = grads[..., n + 1 :]
        delta, bad = _batch_solve(jy, vals[..., None])
        delta = np.where(bad[..., None, None], 0.0, delta)
        y = y - delta[..., 0]
    return y


def _fiber_coefficient_polys(system, frame):
    """For s=1: coefficients of the univariate fiber polynomial as base polynomials."""
    from ..polynomials import HomogeneousPolynomial

    g = frame.rotated[0]
    d = system.degrees[0]
    n = system.n
    buckets = [dict() for _ in range(d + 1)]
    for alpha, c in g.terms.items():
        j = alpha[-1]
        buckets[j][alpha[:-1]] = buckets[j].get(alpha[:-1], 0) + c
    coeff_polys = []
    for j, bucket in enumerate(buckets):
        bucket = {a: c for a, c in bucket.items() if c != 0}
        if bucket:
            coeff_polys.append(HomogeneousPolynomial(n + 1, d - j, bucket))
        else:
            coeff_polys.append(None)
    return coeff_polys


def _roots_univariate(system, frame, u):
    """All d roots of the fiber polynomial at each base sample (companion + polish)."""
    d = system.degrees[0]
    n = system.n
    B = u.shape[0]
    base = np.concatenate([np.ones((B, 1), dtype=np.complex128), u], axis=1)
    coeff_polys = frame._coeff_cache if hasattr(frame, "_coeff_cache") else None
    if coeff_polys is None:
        coeff_polys = _fiber_coefficient_polys(system, frame)
        object.__setattr__(frame, "_coeff_cache", coeff_polys)
    C = np.zeros((B, d + 1), dtype=np.complex128)
    for j, cp in enumerate(coeff_polys):
        if cp is not None:
            C[:, j] = cp(base)
    lead = C[:, -1]
    if d == 1:
        y = (-C[:, 0] / lead)[:, None]
    else:
        comp = np.zeros((B, d, d), dtype=np.complex128)
        comp[:, 1:, :-1] = np.eye(d - 1)
        comp[:, :, -1] = -C[:, :-1] / lead[:, None]
        y = np.linalg.eigvals(comp)
    # Newton polish with Horner evaluation of p and p'.
    for _ in range(3):
        p = np.zeros_like(y)
        dp = np.zeros_like(y)
        for j in range(d, -1, -1):
            dp = dp * y + p
            p = p * y + C[:, j][:, None]
        step = np.where(dp != 0, p / np.where(dp == 0, 1, dp), 0)
        y = y - step
    return y[..., None]  # (B, d, 1)


def _start_roots(degrees, gamma):
    """Cartesian product of the d_i-th roots of gamma_i: the total-degree start solutions."""
    axes = []
    for d, g in zip(degrees, gamma):
        k = np.arange(d)
        axes.append(g ** (1.0 / d) * np.exp(2j * np.pi * k / d))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)  # (D, s)


def _roots_homotopy(system, frame, u):
    """Total-degree homotopy continuation for s >= 2 fiber systems.

    A mask-free fixed-schedule sweep tracks every path first (generic samples
    finish there); samples failing the endgame checks are re-tracked with an
    adaptive step, and only then count as failed.
    """
    s = system.s
    n = system.n
    B = u.shape[0]
    D = system.D
    ev = frame_evaluator(frame)
    y0 = np.broadcast_to(_start_roots(system.degrees, frame.gamma), (B, D, s))
    gb = frame.gamma_blend
    gamma = frame.gamma[:s]
    degs = np.array(system.degrees)

    def hom_parts(w):
        """Values and fiber Jacobians of target and start systems at w = (1,u,y)."""
        tv, grads = ev(w)
        tj = grads[..., n + 1 :]
        yy = w[..., n + 1 :]
        sv = yy**degs - gamma
        sj = np.zeros(yy.shape + (s,), dtype=np.complex128)
        idx = np.arange(s)
        sj[..., idx, idx] = degs * yy ** (degs - 1)
        return tv, tj, sv, sj

    def sweep(uu, yy, steps, blend):
        """Fixed-schedule tracking of all paths over uu; returns final y."""
        w = assemble_points(uu, yy.copy())
        ts = np.linspace(0.0, 1.0, steps + 1)
        for k in range(steps):
            t0, t1 = ts[k], ts[k + 1]
            tv, tj, sv, sj = hom_parts(w)
            hy = (1 - t0) * blend * sj + t0 * tj
            ht = tv - blend * sv
            dy, bad = _batch_solve(hy, ht[..., None])
            dy = np.where(bad[..., None, None], 0.0, dy)[..., 0]
            w[..., n + 1 :] -= dy * (t1 - t0)
            for _ in range(2):
                tv, tj, sv, sj = hom_parts(w)
                hv = (1 - t1) * blend * sv + t1 * tv
                hy = (1 - t1) * blend * sj + t1 * tj
                step, bad = _batch_solve(hy, hv[..., None])
                step = np.where(bad[..., None, None], 0.0, step)[..., 0]
                w[..., n + 1 :] -= step
        return w[..., n + 1 :]

    base_steps = 8 + 4 * int(max(system.degrees))
    y = sweep(u, y0, base_steps, gb)
    y = newton_refine(ev, u, y, iters=3)
    ok = _endgame_ok(system, frame, u, y)
    # a second sweep with a rotated gamma-trick constant avoids the near-
    # discriminant passes responsible for almost all first-sweep failures
    for blend_phase, extra in ((0.6376 + 0.7704j, 2), (-0.2818 + 0.9595j, 4)):
        if np.all(ok):
            break
        retry = np.nonzero(~ok)[0]
        y_retry = sweep(u[retry], y0[retry], extra * base_steps, gb * blend_phase)
        y_retry = newton_refine(ev, u[retry], y_retry, iters=3)
        ok_retry = _endgame_ok(system, frame, u[retry], y_retry)
        y[retry] = np.where(ok_retry[:, None, None], y_retry, y[retry])
        ok[retry] |= ok_retry
    if not np.all(ok):
        retry = np.nonzero(~ok)[0]
        y_retry = _adaptive_track(system, frame, u[retry], y0[retry])
        y_retry = newton_refine(ev, u[retry], y_retry, iters=3)
        ok_retry = _endgame_ok(system, frame, u[retry], y_retry)
        y[retry] = np.where(ok_retry[:, None, None], y_retry, y[retry])
        ok[retry] |= ok_retry
    return y, ok


def _endgame_ok(system, frame, u, y):
    """Residual, finiteness and path-separation checks after tracking."""
    w = assemble_points(u, y)
    resid = _residual_ok(system, frame, w, tol=1e-8)
    finite = np.all(np.isfinite(y), axis=-1)
    D = y.shape[1]
    if D > 1:
        diff = np.linalg.norm(y[:, :, None, :] - y[:, None, :, :], axis=-1)
        iu = np.triu_indices(D, k=1)
        min_sep = diff[:, iu[0], iu[1]].min(axis=1)
        separated = min_sep > MERGE_TOL * (1 + np.abs(y).max(axis=(1, 2)))
    else:
        separated = np.ones(y.shape[0], dtype=bool)
    return np.all(resid & finite, axis=1) & separated


def _adaptive_track(system, frame, u, y_start):
    """Adaptive-step tracking used to rescue paths the fixed sweep lost."""
    s = system.s
    n = system.n
    B, D, _ = y_start.shape
    if B == 0:
        return y_start.copy()
    ev = frame_evaluator(frame)
    gb = frame.gamma_blend
    gamma = frame.gamma[:s]
    degs = np.array(system.degrees)
    y = y_start.reshape(B * D, s).copy()
    urep = np.repeat(u, D, axis=0)

    def target_vals_jy(uu, yy):
        w = np.concatenate([np.ones((len(uu), 1), dtype=np.complex128), uu, yy], axis=1)
        vals, grads = ev(w)
        return vals, grads[..., n + 1 :]

    def start_vals(yy):
        return yy**degs - gamma

    def start_jy(yy):
        out = np.zeros(yy.shape + (s,), dtype=np.complex128)
        idx = np.arange(s)
        out[:, idx, idx] = degs * yy ** (degs - 1)
        return out

    P = B * D
    t = np.zeros(P)
    dt = np.full(P, 0.1)
    failed = np.zeros(P, dtype=bool)
    for _ in range(300):
        act = ~failed & (t < 1.0)
        if not act.any():
            break
        ya, ta, ua = y[act], t[act], urep[act]
        dta = np.minimum(dt[act], 1.0 - ta)
        tv, tj = target_vals_jy(ua, ya)
        sv = start_vals(ya)
        sj = start_jy(ya)
        hy = (1 - ta)[:, None, None] * gb * sj + ta[:, None, None] * tj
        ht = tv - gb * sv
        dy, dbad = _batch_solve(hy, ht[..., None])
        dy = np.where(dbad[..., None, None], 0.0, -dy)[..., 0]
        yp = ya + dy * dta[:, None]
        tn = ta + dta
        corr = np.full(len(ya), np.inf)
        for _ in range(3):
            tv, tj = target_vals_jy(ua, yp)
            sv = start_vals(yp)
            sj = start_jy(yp)
            hv = (1 - tn)[:, None] * gb * sv + tn[:, None] * tv
            hy = (1 - tn)[:, None, None] * gb * sj + tn[:, None, None] * tj
            step, sbad = _batch_solve(hy, hv[..., None])
            step = np.where(sbad[..., None, None], np.inf, step)[..., 0]
            yp = np.where(np.isfinite(step), yp - step, yp)
            corr = np.linalg.norm(np.where(np.isfinite(step), step, 1e6), axis=-1)
        ok = corr <= 1e-8 * (1 + np.linalg.norm(yp, axis=-1))
        idx = np.nonzero(act)[0]
        good = idx[ok]
        bad = idx[~ok]
        y[good] = yp[ok]
        t[good] = tn[ok]
        dt[good] = np.minimum(dt[good] * 2.0, 0.25)
        dt[bad] = dt[bad] * 0.5
        failed[bad[dt[bad] < 1e-9]] = True
    return y.reshape(B, D, s)


def branch_data(system, frame, u):
    """Solve all fibers over base samples ``u`` and package lifts and conditioning."""
    B = u.shape[0]
    n = system.n
    s = system.s
    V = system.N + 1
    if s == 0:
        y = np.zeros((B, 1, 0), dtype=np.complex128)
        track_ok = np.ones(B, dtype=bool)
    elif s == 1:
        y = _roots_univariate(system, frame, u)
        y = newton_refine(frame_evaluator(frame), u, y, iters=2)
        track_ok = np.ones(B, dtype=bool)
    else:
        y, track_ok = _roots_homotopy(system, frame, u)

    w = assemble_points(u, y)
    norms = np.linalg.norm(w, axis=-1)
    if s > 0:
        resid_ok = _residual_ok(system, frame, w)
        finite = np.all(np.isfinite(y), axis=-1)
        # merged paths (or double roots) invalidate the sample
        if y.shape[1] > 1:
            diff = np.linalg.norm(y[:, :, None, :] - y[:, None, :, :], axis=-1)
            iu = np.triu_indices(y.shape[1], k=1)
            min_sep = diff[:, iu[0], iu[1]].min(axis=1)
            separated = min_sep > MERGE_TOL * (1 + np.abs(y).max(axis=(1, 2)))
        else:
            separated = np.ones(B, dtype=bool)
        _, grads = frame_evaluator(frame)(w)
        jy = grads[..., n + 1 :]
        ju = grads[..., 1 : n + 1]
        jfull = grads[..., 1:]
        sv_full = np.linalg.svd(jfull, compute_uv=False)
        sv_y = np.linalg.svd(jy, compute_uv=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = sv_full[..., 0] / sv_y[..., -1]
        cond = np.where(np.isfinite(cond), cond, np.inf)
        dydu, dbad = _batch_solve(jy, ju)
        dydu = np.where(dbad[..., None, None], 0.0, -dydu)
        cond = np.where(dbad, np.inf, cond)
        valid = track_ok & np.all(resid_ok & finite, axis=1) & separated
    else:
        cond = np.ones((B, 1))
        dydu = np.zeros((B, 1, 0, n), dtype=np.complex128)
        valid = track_ok

    L = np.zeros((B, y.shape[1], V, n), dtype=np.complex128)
    L[..., 1 : n + 1, :] = np.eye(n)
    if s > 0:
        L[..., n + 1 :, :] = dydu
    w_hat = w / norms[..., None]
    lift = L / norms[..., None, None]
    return BranchData(u=u, y=y, w_hat=w_hat, lift=lift, cond=cond, valid=valid)


def solve_fiber(ci, frame, u):
    """All D branch points above one base point; raises on solve failure.

    Returns BranchPoints Newton-polished to residual below 1e-10 relative scale.
    """
    u = np.asarray(u, dtype=np.complex128).reshape(1, -1)
    data = branch_data(ci, frame, u)
    if not data.valid[0]:
        if ci.s >= 2:
            raise PathFailure("homotopy tracking failed or paths merged at this base point")
        raise DegreeDeficit("fiber solve failed at this base point")
    return [data.point(0, j) for j in range(data.y.shape[1])]


def continue_branch(frame, u_new, y_start, iters=5):
    """Newton continuation of branches to nearby base points (used by FD stencils).

    Returns the refined fiber coordinates; callers are responsible for
    branch-jump detection.
    """
    return newton_refine(frame_evaluator(frame), u_new, y_start, iters=iters)
