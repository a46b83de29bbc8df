"""Generic chart frames for branched-cover parametrizations, and base sampling.

A frame is a random unitary rotation of the ambient coordinates such that the
projection of the variety to the first n+1 rotated coordinates is a branched
cover of P^n of full fiber degree D.  Genericity is certified by a
leading-coefficient score plus probe fiber solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FrameSearchExhausted
from ..polynomials import GroupElement, transform_polynomial

__all__ = ["AmbientSpace", "ChartFrame", "make_frame", "sample_base", "jacobian_rank_probe", "rng_for"]

FRAME_STREAM = 1 << 62
PROBE_POINTS = 32
GENERICITY_FLOOR = 1e-8


def rng_for(seed, stream):
    """Counter-based generator for a (seed, stream) pair; streams never collide."""
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(stream & (2**64 - 1))])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class AmbientSpace:
    """Projective N-space presented with the same interface as a complete intersection."""

    N: int
    name: str = ""

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", f"P^{self.N}")

    degrees: tuple = ()
    polys: tuple = ()

    @property
    def s(self):
        return 0

    @property
    def n(self):
        return self.N

    @property
    def D(self):
        return 1

    @property
    def m(self):
        return self.N + 1


@dataclass(frozen=True)
class ChartFrame:
    """Unitary coordinate rotation with certified-generic fiber structure.

    ``rotated`` holds the polynomials composed with U, so that a rotated point
    w corresponds to the ambient point U @ w and rotated[i](w) = F_i(U w).
    """

    system: object
    U: np.ndarray
    genericity_score: float
    rotated: tuple
    gamma: np.ndarray
    gamma_blend: complex
    seed: int
    attempt: int = 0

    @property
    def base_indices(self):
        return tuple(range(self.system.n + 1))

    @property
    def fiber_indices(self):
        return tuple(range(self.system.n + 1, self.system.N + 1))

    def ambient_points(self, w):
        """Map rotated representatives back to the original coordinates."""
        return np.asarray(w) @ self.U.T

    def rotate_group(self, sigma):
        """Conjugate a group element into the rotated frame: phi_sigma(U w) uses sigma @ U."""
        return sigma.matrix @ self.U


def _haar_unitary(rng, size):
    g = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_base(n, rng, count=None):
    """Fubini-Study-uniform points of P^n in the affine chart z = (1, u).

    Draws n+1 standard complex Gaussians g and returns u = g_{1:}/g_0; draws
    with |g_0|/|g| < 1e-6 are redrawn.  ``count=None`` returns a single vector.
    """
    m = 1 if count is None else int(count)
    g = rng.standard_normal((m, n + 1)) + 1j * rng.standard_normal((m, n + 1))
    if n > 0:
        bad = np.abs(g[:, 0]) < 1e-6 * np.linalg.norm(g, axis=1)
        while np.any(bad):
            k = int(bad.sum())
            g[bad] = rng.standard_normal((k, n + 1)) + 1j * rng.standard_normal((k, n + 1))
            bad = np.abs(g[:, 0]) < 1e-6 * np.linalg.norm(g, axis=1)
    u = g[:, 1:] / g[:, :1]
    return u[0] if count is None else u


def _pure_fiber_score(system, rotated):
    """min_i |coeff of y_i^{d_i} in G_i| relative to the largest coefficient of G_i."""
    n = system.n
    score = np.inf
    for i, (g, d) in enumerate(zip(rotated, system.degrees)):
        alpha = [0] * (system.N + 1)
        alpha[n + 1 + i] = d
        c = g.terms.get(tuple(alpha), 0.0)
        score = min(score, abs(c) / g.max_coeff())
    return score


def make_frame(system, seed):
    """Search random unitaries until the fiber system is generic; deterministic in seed.

    Raises FrameSearchExhausted after 100 attempts, which signals highly
    degenerate input.
    """
    from . import fibers  # local import; fibers has no dependency on this module

    rng = rng_for(seed, FRAME_STREAM)
    size = system.N + 1
    for attempt in range(100):
        U = _haar_unitary(rng, size)
        gamma = np.exp(2j * np.pi * rng.random(max(system.s, 1)))
        gamma_blend = complex(np.exp(2j * np.pi * rng.random()))
        if system.s == 0:
            return ChartFrame(system, U, np.inf, (), gamma, gamma_blend, seed, attempt)
        sig = GroupElement(U)
        rotated = tuple(transform_polynomial(f, sig) for f in system.polys)
        score = _pure_fiber_score(system, rotated)
        frame = ChartFrame(system, U, score, rotated, gamma, gamma_blend, seed, attempt)
        if score <= GENERICITY_FLOOR:
            continue
        probes = sample_base(system.n, rng, PROBE_POINTS)
        data = fibers.branch_data(system, frame, probes)
        if np.all(data.valid):
            return frame
    raise FrameSearchExhausted(
        f"no generic frame found for {getattr(system, 'name', system)!r} in 100 attempts"
    )


def jacobian_rank_probe(ci, seed=0, trials=64):
    """Probabilistic smoothness check: smallest normalized singular value of the
    Jacobian [grad F_i] over sampled points of M.  Near-zero values indicate a
    singular (or nearly singular) variety.
    """
    from . import fibers

    frame = make_frame(ci, seed)
    rng = rng_for(seed, FRAME_STREAM + 1)
    u = sample_base(ci.n, rng, trials)
    data = fibers.branch_data(ci, frame, u)
    w = data.w_hat[data.valid]
    grads = np.stack([g.gradient(w) for g in frame.rotated], axis=-2)
    sv = np.linalg.svd(grads, compute_uv=False)
    scale = np.array([g.max_coeff() * d for g, d in zip(frame.rotated, ci.degrees)]).max()
    return float(np.min(sv[..., -1]) / scale)
