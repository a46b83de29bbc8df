"""Ricci forms of restricted Fubini-Study metrics by finite differences.

Ric(omega|_M) has no closed form on a general complete intersection, so the
complex Hessian of log det A(u) is assembled from central differences on the
real chart, with fiber points re-solved by Newton continuation from the branch
(branch jumps are detected and reject the sample).
"""

from __future__ import annotations

import numpy as np

from ..errors import BranchJump, StencilIllConditioned
from .fibers import _batch_solve, assemble_points, continue_branch, frame_evaluator
from .forms import FormMatrix, chart_fs_matrix, fs_pullback_gram, fs_pushed_pullback_gram

__all__ = ["ricci_batch", "ricci_matrix"]

JUMP_FACTOR = 10.0


def _logdet_at(system, frame, u, y, sigma_rotated):
    """log det of the pulled-back form at (u, y-continued); also returns the
    refined fiber coordinates and a per-sample bad mask."""
    n = system.n
    s = system.s
    if s > 0:
        y = continue_branch(frame, u, y, iters=4)
    w = assemble_points(u, y)
    norms = np.linalg.norm(w, axis=-1)
    B, D, V = w.shape
    L = np.zeros((B, D, V, n), dtype=np.complex128)
    L[..., 1 : n + 1, :] = np.eye(n)
    bad = np.zeros(B, dtype=bool)
    if s > 0:
        _, grads = frame_evaluator(frame)(w)
        jy = grads[..., n + 1 :]
        ju = grads[..., 1 : n + 1]
        dydu, solve_bad = _batch_solve(jy, ju)
        L[..., n + 1 :, :] = -np.where(solve_bad[..., None, None], 0.0, dydu)
        bad |= solve_bad.any(axis=1)
    w_hat = w / norms[..., None]
    lift = L / norms[..., None, None]
    if sigma_rotated is None:
        A = fs_pullback_gram(w_hat, lift)
    else:
        A = fs_pushed_pullback_gram(sigma_rotated, w_hat, lift)
    det = np.linalg.det(A).real
    bad |= (det <= 0).any(axis=1) | ~np.isfinite(det).all(axis=1)
    # compensate the far-field decay so the differenced potential stays O(1);
    # the compensation is restored in closed form after the stencil
    comp = (n + 1) * np.log1p(np.sum(np.abs(u) ** 2, axis=-1))
    ld = np.log(np.where(det > 0, det, 1.0)) + comp[:, None]
    return ld, y, bad


def _hessian_once(system, frame, u, y0, sigma_rotated, h, f0, y_scale):
    """Complex mixed Hessian of log det A at step h: (B, D, n, n) plus bad mask."""
    n = system.n
    B, D, _ = y0.shape

    def f(dx, dy_):
        delta = (np.asarray(dx) + 1j * np.asarray(dy_)) * h[:, None]
        ld, y_new, bad = _logdet_at(system, frame, u + delta, y0, sigma_rotated)
        if system.s > 0:
            jump = np.linalg.norm(y_new - y0, axis=-1)
            tol = JUMP_FACTOR * h[:, None] * (y_scale + 1.0)
            bad = bad | (jump > tol).any(axis=1)
        return ld, bad

    bad = np.zeros(B, dtype=bool)
    ex = np.eye(n)
    fxx = np.empty((n, B, D))
    fyy = np.empty((n, B, D))
    for j in range(n):
        fp, b1 = f(ex[j], 0 * ex[j])
        fm, b2 = f(-ex[j], 0 * ex[j])
        fxx[j] = (fp - 2 * f0 + fm) / h[:, None] ** 2
        gp, b3 = f(0 * ex[j], ex[j])
        gm, b4 = f(0 * ex[j], -ex[j])
        fyy[j] = (gp - 2 * f0 + gm) / h[:, None] ** 2
        bad |= b1 | b2 | b3 | b4

    def cross(da, db):
        nonlocal bad
        fpp, b1 = f(da[0] + db[0], da[1] + db[1])
        fpm, b2 = f(da[0] - db[0], da[1] - db[1])
        fmp, b3 = f(-da[0] + db[0], -da[1] + db[1])
        fmm, b4 = f(-da[0] - db[0], -da[1] - db[1])
        bad |= b1 | b2 | b3 | b4
        return (fpp - fpm - fmp + fmm) / (4 * h[:, None] ** 2)

    H = np.zeros((B, D, n, n), dtype=np.complex128)
    for j in range(n):
        H[..., j, j] = 0.25 * (fxx[j] + fyy[j])
    for j in range(n):
        for k in range(j + 1, n):
            f_xx = cross((ex[j], 0 * ex[j]), (ex[k], 0 * ex[k]))
            f_yy = cross((0 * ex[j], ex[j]), (0 * ex[k], ex[k]))
            f_xy = cross((ex[j], 0 * ex[j]), (0 * ex[k], ex[k]))
            f_yx = cross((0 * ex[j], ex[j]), (ex[k], 0 * ex[k]))
            # d_{u_j} d_{ubar_k} = 1/4 [(f_xx + f_yy) + i (f_xy - f_yx)]
            H[..., j, k] = 0.25 * ((f_xx + f_yy) + 1j * (f_xy - f_yx))
            H[..., k, j] = np.conj(H[..., j, k])
    return H, bad


def ricci_batch(system, frame, batch, sigma_rotated=None, fd_step=1e-4, richardson=True):
    """Ricci form matrices at every branch point of a batch: (B, D, n, n).

    Returns (R, ok) where R is in the same representation convention as the
    pullback matrices and ok flags samples whose stencils stayed on-branch.
    """
    data = batch.data
    u = data.u
    y0 = data.y
    n = system.n
    if n == 0:
        B, D = data.counts
        return np.zeros((B, D, 0, 0), dtype=np.complex128), np.ones(B, dtype=bool)
    scale = 1.0 / np.abs(batch.lift[..., 1, 0])  # |w| recovered from the normalized lift
    if system.s > 0:
        dydu = batch.lift[..., n + 1 :, :] * scale[..., None, None]
        y_scale = np.linalg.norm(dydu, axis=(-1, -2))
    else:
        y_scale = np.zeros(u.shape[:1] + (1,))
    h = fd_step * (1.0 + np.linalg.norm(u, axis=1))
    f0, _, bad0 = _logdet_at(system, frame, u, y0, sigma_rotated)
    if system.s > 0 and y0.shape[1] > 1:
        # near the branch locus the stencil reach is comparable to the gap
        # between sheets and the differences are meaningless: reject
        diff = np.linalg.norm(y0[:, :, None, :] - y0[:, None, :, :], axis=-1)
        iu = np.triu_indices(y0.shape[1], k=1)
        min_sep = diff[:, iu[0], iu[1]].min(axis=1)
        reach = h * (y_scale.max(axis=1) + 1.0)
        bad0 = bad0 | (min_sep < 20.0 * reach)
    H1, bad1 = _hessian_once(system, frame, u, y0, sigma_rotated, h, f0, y_scale)
    if richardson:
        H2, bad2 = _hessian_once(system, frame, u, y0, sigma_rotated, h / 2, f0, y_scale)
        H = (4.0 * H2 - H1) / 3.0
        bad = bad0 | bad1 | bad2
    else:
        H = H1
        bad = bad0 | bad1
    # hermitize, then convert to the conjugate-Hessian storage convention
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    R = -np.conj(H)
    # restore the chart compensation subtracted inside the stencil potential
    R = R + (system.n + 1) * chart_fs_matrix(u)[:, None, :, :]
    return R, ~bad


def ricci_matrix(ci, frame, bp, sigma=None, h=1e-4, richardson=True):
    """Ricci FormMatrix of omega|_M (or omega_phi|_M for a group element sigma)
    at a single branch point."""
    if not 1e-6 <= h <= 1e-2:
        raise StencilIllConditioned(f"step h={h} outside [1e-6, 1e-2]")
    from .montecarlo import BranchBatch, chart_det
    from .fibers import BranchData

    u = np.asarray(bp.u, dtype=np.complex128)[None, :]
    y = np.asarray(bp.y, dtype=np.complex128)[None, None, :]
    w = np.asarray(bp.z, dtype=np.complex128)[None, None, :]
    norm = np.linalg.norm(w, axis=-1)
    lift = np.asarray(bp.L, dtype=np.complex128)[None, None, :, :] / norm[..., None, None]
    data = BranchData(
        u=u, y=y, w_hat=w / norm[..., None], lift=lift,
        cond=np.array([[bp.cond]]), valid=np.array([True]),
    )
    batch = BranchBatch(system=ci, frame=frame, data=data, base_det=chart_det(u))
    sigma_rot = frame.rotate_group(sigma) if sigma is not None else None
    R, ok = ricci_batch(ci, frame, batch, sigma_rot, fd_step=h, richardson=richardson)
    if not ok[0]:
        raise BranchJump("a stencil point left the branch or degenerated")
    return FormMatrix(R[0, 0])
