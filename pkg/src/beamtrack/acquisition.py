"""Overhead-penalized parallel expected improvement and its greedy maximization.

For a beamset B the set-EI is ``J(B) = E[max_{b in B} f(b) - f*]^+`` under the
slot posterior, with ``f*`` the largest posterior mean.  J is estimated from a
single matrix of joint posterior draws per slot (common random numbers), so
every estimate is an average of pathwise quantities and monotonicity and
submodularity hold sample by sample, not just in expectation.

Ties between candidate beams are always broken towards the lowest flat index.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels

DEFAULT_MC_SAMPLES = 2048


@dataclass(frozen=True)
class OverheadPenalty:
    """``h(n) = c1 * n + c2 * n**2`` for ``n <= n_max``, infinite beyond."""

    c1: float = 0.2
    c2: float = 0.0
    n_max: int = 16

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("penalty coefficients must be non-negative")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")


def penalty(p, n):
    if n < 0:
        raise ValueError("beamset size must be non-negative")
    if n > p.n_max:
        return np.inf
    return p.c1 * n + p.c2 * n * n


def joint_samples(mean, cov, n_samples, rng):
    """Draws from N(mean, cov) via a clipped eigendecomposition (cov may be singular)."""
    w, u = np.linalg.eigh(0.5 * (cov + cov.T))
    factor = u * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((n_samples, mean.shape[0]))
    return mean[None, :] + z @ factor.T


@dataclass(frozen=True, eq=False)
class AcquisitionContext:
    posterior: object
    f_star: float
    mc_samples: int
    rng_seed: int
    sample_cache: np.ndarray = field(repr=False)

    @property
    def n_beams(self):
        return self.sample_cache.shape[1]


def believed_best(posterior):
    return float(np.max(posterior.mean))


def make_context(posterior, mc_samples=DEFAULT_MC_SAMPLES, rng_seed=0):
    """Draw the slot's sample cache once; every J estimate reuses it."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    rng = np.random.default_rng(rng_seed)
    cache = joint_samples(np.asarray(posterior.mean, dtype=float),
                          np.asarray(posterior.cross_cov, dtype=float), mc_samples, rng)
    cache.setflags(write=False)
    return AcquisitionContext(posterior, believed_best(posterior), int(mc_samples),
                              int(rng_seed), cache)


def ei_single_closed_form(mu, s, f_star):
    """Vectorized ``E[X - f*]^+`` for ``X ~ N(mu, s^2)``."""
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(s, dtype=float)
    diff = mu - f_star
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > 0, diff / np.where(s > 0, s, 1.0), 0.0)
        val = diff * stats.norm.cdf(z) + s * stats.norm.pdf(z)
    return np.where(s > 0, np.maximum(val, 0.0), np.maximum(diff, 0.0))


def ei_single(ctx, beam_index):
    post = ctx.posterior
    return float(ei_single_closed_form(post.mean[beam_index], post.std[beam_index], ctx.f_star))


def _improvements(ctx, beamset):
    idx = np.asarray(sorted(set(int(b) for b in beamset)), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("beamset must be non-empty")
    return kernels.set_improvements(ctx.sample_cache, ctx.f_star, idx[None, :])[0]


def j_estimate(ctx, beamset, return_stderr=False):
    """Monte-Carlo set-EI on the shared sample cache."""
    imp = _improvements(ctx, beamset)
    est = float(imp.mean())
    if return_stderr:
        return est, float(imp.std(ddof=1) / np.sqrt(imp.size)) if imp.size > 1 else 0.0
    return est


def j_pathwise(ctx, beamset):
    """Per-sample improvement vector behind :func:`j_estimate`."""
    return _improvements(ctx, beamset)


def j_batch(ctx, subsets):
    """Set-EI for every row of an integer array of equal-size subsets."""
    subsets = np.ascontiguousarray(subsets, dtype=np.int64)
    return kernels.set_improvements(ctx.sample_cache, ctx.f_star, subsets).mean(axis=1)


@dataclass(frozen=True)
class BeamsetChoice:
    beams: tuple
    j_values: tuple
    objective: float

    def __len__(self):
        return len(self.beams)


class _Greedy:
    """Incremental greedy state: running per-sample max and chosen beams."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.samples = np.ascontiguousarray(ctx.sample_cache)
        self.running = np.full(self.samples.shape[0], -np.inf)
        self.candidates = np.ones(self.samples.shape[1], dtype=np.bool_)
        self.beams = []
        self.j_values = []

    def step(self):
        gains = kernels.greedy_gains(self.samples, self.running, self.ctx.f_star, self.candidates)
        b = int(np.argmax(gains))
        self.beams.append(b)
        self.j_values.append(float(gains[b]))
        self.candidates[b] = False
        np.maximum(self.running, self.samples[:, b], out=self.running)
        return b


def greedy_fixed_size(ctx, n):
    """Greedy maximization of J over sets of exactly ``n`` beams."""
    if not 1 <= n <= ctx.n_beams:
        raise ValueError(f"n must be in [1, {ctx.n_beams}], got {n}")
    g = _Greedy(ctx)
    for _ in range(n):
        g.step()
    return BeamsetChoice(tuple(g.beams), tuple(g.j_values), g.j_values[-1])


def choose_beamset(ctx, p):
    """Grow the greedy set while ``J - h`` strictly improves; at least one beam."""
    g = _Greedy(ctx)
    g.step()
    best_obj = g.j_values[0] - penalty(p, 1)
    limit = min(p.n_max, ctx.n_beams)
    while len(g.beams) < limit:
        g.step()
        n = len(g.beams)
        obj = g.j_values[-1] - penalty(p, n)
        if obj <= best_obj:
            g.beams.pop()
            g.j_values.pop()
            break
        best_obj = obj
    return BeamsetChoice(tuple(g.beams), tuple(g.j_values), float(best_obj))
