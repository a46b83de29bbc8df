"""Deterministic Monte-Carlo integration over branched covers of projective space.

Samples are pre-assigned to counter-based Philox substreams in fixed-size
blocks, and block results are reduced in index order, so an estimate depends
only on (seed, samples) and never on the worker count.  Integrands are
vectorized: they receive a BranchBatch and return one contribution per branch;
non-finite contributions reject the whole sample (counted, never clipped).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import TooManyRejections
from .fibers import BranchData, BranchPoint, branch_data
from .forms import fs_pullback_gram, fs_pushed_pullback_gram
from .frames import make_frame, rng_for, sample_base

__all__ = [
    "Quadrature",
    "MCEstimate",
    "BranchBatch",
    "BranchPoint",
    "integrate",
    "integrate_multi",
    "volume",
    "sample_fiber_points",
]

BLOCK_SIZE = 4096  # fixed: part of the sampling scheme, not a tuning knob


@dataclass(frozen=True)
class Quadrature:
    """Quadrature specification (config keys: samples, seed, fd_step, richardson,
    cond_limit, reject_limit)."""

    samples: int = 200_000
    seed: int = 12345
    fd_step: float = 1e-4
    richardson: bool = True
    cond_limit: float = 1e8
    reject_limit: float = 0.01
    workers: int = 1

    def with_samples(self, samples):
        return replace(self, samples=samples)

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass(frozen=True)
class MCEstimate:
    """Integral estimate with standard error and reproducibility metadata.

    ``samples`` is the requested sample count; ``rejected`` of those were
    discarded (ill-conditioned fibers, failed paths, non-finite integrands) and
    the mean runs over the remainder.  ``stderr`` is the sample standard
    deviation over accepted samples divided by sqrt(accepted).
    """

    value: float
    stderr: float
    samples: int
    seed: int
    rejected: int = 0
    high_rejection: bool = False

    def __add__(self, other):
        o = other if isinstance(other, MCEstimate) else MCEstimate(float(other), 0.0, 0, self.seed)
        return MCEstimate(
            self.value + o.value,
            float(np.hypot(self.stderr, o.stderr)),
            max(self.samples, o.samples),
            self.seed,
            max(self.rejected, o.rejected),
            self.high_rejection or o.high_rejection,
        )

    def scaled(self, c):
        return MCEstimate(
            c * self.value, abs(c) * self.stderr, self.samples, self.seed,
            self.rejected, self.high_rejection,
        )

    @classmethod
    def exact(cls, value, seed=0):
        return cls(float(value), 0.0, 0, seed)


@dataclass
class BranchBatch:
    """One block of branch points with the geometric data integrands consume."""

    system: object
    frame: object
    data: BranchData
    base_det: np.ndarray      # (B,) det of the Fubini-Study chart matrix at u
    _fs_cache: np.ndarray = field(default=None, repr=False)

    @property
    def u(self):
        return self.data.u

    @property
    def w_hat(self):
        return self.data.w_hat

    @property
    def lift(self):
        return self.data.lift

    @property
    def valid(self):
        return self.data.valid

    def fs_pullback(self):
        """Pullback of the Fubini-Study form to each branch: (B, D, n, n)."""
        if self._fs_cache is None:
            self._fs_cache = fs_pullback_gram(self.w_hat, self.lift)
        return self._fs_cache

    def pushed_pullback(self, sigma_rotated):
        """Pullback of the sigma-pushed form; ``sigma_rotated`` acts on rotated coords."""
        return fs_pushed_pullback_gram(sigma_rotated, self.w_hat, self.lift)

    def phi(self, sigma_rotated):
        """phi_sigma at each branch (B, D); w_hat is unit so no denominator needed."""
        sw = self.w_hat @ np.asarray(sigma_rotated).T
        return np.log(np.sum(np.abs(sw) ** 2, axis=-1))

    def point(self, i, j):
        return self.data.point(i, j)


def chart_det(u):
    """det of the FS chart matrix on P^n at u: (1+|u|^2)^-(n+1), in closed form."""
    n = u.shape[-1]
    return (1.0 + np.sum(np.abs(u) ** 2, axis=-1)) ** (-(n + 1))


def make_batch(system, frame, u, Q):
    data = branch_data(system, frame, u)
    cond_ok = np.all(data.cond < Q.cond_limit, axis=1)
    data.valid = data.valid & cond_ok
    return BranchBatch(system=system, frame=frame, data=data, base_det=chart_det(u))


def _block_stats(system, frame, integrand, Q, block_index, count, weights):
    """Evaluate one block of samples.

    Returns (accepted, rejected, S1 (C,), S2 (C,), S1_combined, S2_combined)
    where the combined per-sample value is the weighted sum of components.
    """
    rng = rng_for(Q.seed, block_index)
    u = sample_base(system.n, rng, count)
    batch = make_batch(system, frame, u, Q)
    vals = np.asarray(integrand(batch))
    if vals.ndim == 2:
        vals = vals[..., None]
    per_sample = np.real(vals).sum(axis=1)  # (B, C)
    finite = np.isfinite(per_sample).all(axis=1)
    keep = batch.valid & finite
    kept = per_sample[keep]
    acc = int(kept.shape[0])
    w = np.ones(kept.shape[1]) if weights is None else np.asarray(weights, dtype=np.float64)
    comb = kept @ w
    return (
        acc,
        count - acc,
        kept.sum(axis=0),
        (kept**2).sum(axis=0),
        comb.sum(),
        (comb**2).sum(),
    )


def integrate(system, integrand, Q, frame=None):
    """Monte-Carlo estimate of a scalar integral over the variety.

    ``integrand(batch) -> (B, D)`` returns the per-branch contribution,
    including all density factors; the estimate is the FS-average over base
    samples of the branch sums.  Deterministic in (Q.seed, Q.samples) for any
    worker count.
    """
    est, _ = integrate_multi(system, integrand, Q, frame=frame)
    return est


def integrate_multi(system, integrand, Q, weights=None, names=None, frame=None):
    """Vector-valued Monte-Carlo integration with a jointly-sampled combination.

    ``integrand(batch) -> (B, D, C)`` produces C component contributions per
    branch.  Returns (combined, per_component) where ``combined`` is the
    MCEstimate of sum_c weights[c] * component_c computed from per-sample
    combined values (so its stderr reflects the true covariance), and
    ``per_component`` is a dict name -> MCEstimate.
    """
    if frame is None:
        frame = make_frame(system, Q.seed)
    n_samples = int(Q.samples)
    blocks = []
    start = 0
    bi = 0
    while start < n_samples:
        blocks.append((bi, min(BLOCK_SIZE, n_samples - start)))
        start += BLOCK_SIZE
        bi += 1

    def run(block):
        return _block_stats(system, frame, integrand, Q, block[0], block[1], weights)

    if Q.workers > 1:
        with ThreadPoolExecutor(max_workers=Q.workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]

    total_acc = int(sum(r[0] for r in results))
    total_rej = int(sum(r[1] for r in results))
    if total_acc == 0:
        raise TooManyRejections("every sample was rejected")
    high = total_rej > Q.reject_limit * n_samples
    if high and total_rej > max(1, 0.25 * n_samples):
        raise TooManyRejections(
            f"{total_rej}/{n_samples} samples rejected (limit {Q.reject_limit:.2%})"
        )
    S1 = np.stack([r[2] for r in results]).sum(axis=0)
    S2 = np.stack([r[3] for r in results]).sum(axis=0)
    S1c = np.array([r[4] for r in results]).sum()
    S2c = np.array([r[5] for r in results]).sum()
    C = S1.shape[0]
    if names is None:
        names = [f"term_{c}" for c in range(C)]

    def estimate(sum1, sum2):
        mean = sum1 / total_acc
        var = max(sum2 / total_acc - mean**2, 0.0)
        if total_acc > 1:
            var *= total_acc / (total_acc - 1)
            stderr = np.sqrt(var / total_acc)
        else:
            stderr = np.inf
        return MCEstimate(
            value=float(mean), stderr=float(stderr), samples=n_samples,
            seed=Q.seed, rejected=total_rej, high_rejection=high,
        )

    per_component = {names[c]: estimate(S1[c], S2[c]) for c in range(C)}
    combined = estimate(S1c, S2c)
    return combined, per_component


def pointwise(fn):
    """Adapt a scalar integrand (BranchPoint -> real) to the batch contract.

    Slow path: intended for small-sample contract tests, not production runs.
    """

    def batched(batch):
        B, D = batch.data.counts
        out = np.empty((B, D))
        for i in range(B):
            for j in range(D):
                out[i, j] = fn(batch.point(i, j))
        return out

    return batched


def volume(system, Q, frame=None):
    """MC estimate of the total volume of the variety, which must equal D."""

    def integrand(batch):
        g = batch.fs_pullback()
        return np.linalg.det(g).real / batch.base_det[:, None]

    return integrate(system, integrand, Q, frame=frame)


def sample_fiber_points(system, Q, count, frame=None):
    """A batch of branch points for pointwise tests (first block only)."""
    if frame is None:
        frame = make_frame(system, Q.seed)
    rng = rng_for(Q.seed, 0)
    u = sample_base(system.n, rng, count)
    return make_batch(system, frame, u, Q)
