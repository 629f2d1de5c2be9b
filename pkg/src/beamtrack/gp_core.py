"""Spatio-temporal GP surrogate over (slot, beam).

The covariance is the product of a squared-exponential kernel in time and a
Matérn kernel in beam-index space,

    k((t, a), (t', b)) = theta1 * exp(-((t - t') / theta2)**2) * matern_nu(d(a, b))

with ``d`` the weighted index distance of :func:`beamtrack.beam_grid.beam_distance`.
The regression target is RSRP in dB.  Observation noise ``sigma`` (dB) is
added on the diagonal of the observed block only.

Linear algebra goes through a Cholesky factorization with a diagonal jitter
that starts at ``1e-10 * mean(diag)`` and is escalated by 10x up to
``1e-4 * mean(diag)``; the jitter actually used is reported on the result so
that reference computations can reproduce it.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize, special

from . import kernels
from .beam_grid import BeamIndexMetric, beam_distance

JITTER_START = 1e-10
JITTER_MAX = 1e-4
LOG_2PI = np.log(2 * np.pi)


class GpConditioningError(np.linalg.LinAlgError):
    """Cholesky failed even at the largest jitter."""


@dataclass(frozen=True)
class TimeKernelParams:
    theta1: float = 100.0
    theta2: float = 50.0

    def __post_init__(self):
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ValueError("time kernel parameters must be positive")


@dataclass(frozen=True)
class BeamKernelParams:
    nu: float = 1.5
    metric: BeamIndexMetric = field(default_factory=BeamIndexMetric)

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("Matérn smoothness must be positive")


@dataclass(frozen=True)
class HyperBounds:
    theta1: tuple = (1e-2, 1e4)
    theta2: tuple = (0.5, 200.0)
    ell: tuple = (0.1, 100.0)
    sigma: tuple = (1e-3, 10.0)

    def log_bounds(self):
        b = [self.theta1, self.theta2, self.ell, self.ell, self.sigma]
        return [(np.log(lo), np.log(hi)) for lo, hi in b]


class PriorMean:
    """Per-beam prior mean, constant in time."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.values.setflags(write=False)

    def __call__(self, slot, beam_index):
        return self.values[beam_index]

    def __repr__(self):
        return f"PriorMean({self.values.tolist()!r})"


def zero_prior(n_beams):
    return PriorMean(np.zeros(n_beams))


def prior_mean_from_history(history, grid):
    """Per-beam average of past reports; unseen beams get the global average."""
    n = len(grid)
    if not history:
        return zero_prior(n)
    sums = np.zeros(n)
    counts = np.zeros(n)
    for obs in history:
        sums[obs.beam_index] += obs.rsrp_db
        counts[obs.beam_index] += 1
    glob = sums.sum() / counts.sum()
    vals = np.full(n, glob)
    seen = counts > 0
    vals[seen] = sums[seen] / counts[seen]
    return PriorMean(vals)


# kernels


def time_kernel(params, t, t2):
    dt = (np.asarray(t, dtype=float) - np.asarray(t2, dtype=float)) / params.theta2
    return params.theta1 * np.exp(-dt * dt)


def matern(d, nu):
    """Unit-variance Matérn correlation at distance ``d`` (array)."""
    d = np.asarray(d, dtype=float)
    if nu == 0.5:
        return np.exp(-d)
    if nu == 1.5:
        r = np.sqrt(3.0) * d
        return (1.0 + r) * np.exp(-r)
    if nu == 2.5:
        r = np.sqrt(5.0) * d
        return (1.0 + r + r * r / 3.0) * np.exp(-r)
    r = np.sqrt(2.0 * nu) * d
    out = np.ones_like(r)
    pos = r > 0
    rp = r[pos]
    out[pos] = (2.0 ** (1.0 - nu) / special.gamma(nu)) * rp ** nu * special.kv(nu, rp)
    return out


def beam_kernel(params, a, b):
    return float(matern(beam_distance(params.metric, a, b), params.nu))


@dataclass(frozen=True)
class GpModel:
    """Hyperparameters, prior and the rolling observation window.

    Observations are held as parallel arrays (``slots``, ``beams``,
    ``values``) in chronological order.  Beams are flat grid indices; their
    ``(h, v)`` coordinates follow from ``grid_shape`` (``flat = v * H + h``).
    """

    grid_shape: tuple
    time_params: TimeKernelParams = field(default_factory=TimeKernelParams)
    beam_params: BeamKernelParams = field(default_factory=BeamKernelParams)
    noise_std: float = 1.0
    prior_mean: PriorMean = None
    window: int = 256
    bounds: HyperBounds = field(default_factory=HyperBounds)
    fit_min_points: int = 8
    restarts: int = 4
    fit_maxiter: int = 50
    slots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    beams: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.prior_mean is None:
            object.__setattr__(self, "prior_mean", zero_prior(self.n_beams))
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def n_beams(self):
        return int(self.grid_shape[0] * self.grid_shape[1])

    @property
    def n_obs(self):
        return int(self.slots.shape[0])

    def hv(self, beams):
        beams = np.asarray(beams, dtype=np.int64)
        H = self.grid_shape[0]
        return beams % H, beams // H

    def with_observations(self, observations):
        """New model with ``observations`` appended and the window applied."""
        if not observations:
            return self
        s = np.array([o.slot for o in observations], dtype=np.int64)
        b = np.array([o.beam_index for o in observations], dtype=np.int64)
        y = np.array([o.rsrp_db for o in observations], dtype=float)
        if np.any((b < 0) | (b >= self.n_beams)):
            raise IndexError("beam index outside grid")
        slots = np.concatenate([self.slots, s])
        beams = np.concatenate([self.beams, b])
        values = np.concatenate([self.values, y])
        order = np.argsort(slots, kind="stable")
        slots, beams, values = slots[order], beams[order], values[order]
        if slots.shape[0] > self.window:
            slots = slots[-self.window:]
            beams = beams[-self.window:]
            values = values[-self.window:]
        return replace(self, slots=slots, beams=beams, values=values)

    def with_hyperparameters(self, theta1, theta2, ell_h, ell_v, sigma):
        return replace(
            self,
            time_params=TimeKernelParams(float(theta1), float(theta2)),
            beam_params=BeamKernelParams(self.beam_params.nu,
                                         BeamIndexMetric(float(ell_h), float(ell_v))),
            noise_std=float(sigma),
        )

    def hyperparameters(self):
        m = self.beam_params.metric
        return np.array([self.time_params.theta1, self.time_params.theta2,
                         m.ell_h, m.ell_v, self.noise_std])


def full_kernel(model, x, x2, observed=False):
    """Covariance between ``x = (t, beam)`` and ``x2``; adds sigma^2 on an observed diagonal."""
    (t, a), (t2, b) = x, x2
    ha, va = model.hv(a)
    hb, vb = model.hv(b)
    k = time_kernel(model.time_params, t, t2) * beam_kernel(model.beam_params, (ha, va), (hb, vb))
    if observed and t == t2 and a == b:
        k += model.noise_std ** 2
    return float(k)


def cross_gram(model, slots_a, beams_a, slots_b, beams_b):
    """Noise-free kernel matrix between two point sets.

    Slots and beam indices are integers, so the kernel is tabulated over the
    distinct time lags and ``(|dh|, |dv|)`` offsets and then gathered.
    """
    H, V = model.grid_shape
    ha, va = model.hv(beams_a)
    hb, vb = model.hv(beams_b)
    dt = np.abs(np.asarray(slots_a, dtype=float)[:, None]
                - np.asarray(slots_b, dtype=float)[None, :])
    off = np.abs(ha[:, None] - hb[None, :]) * V + np.abs(va[:, None] - vb[None, :])
    m = model.beam_params.metric
    grid_off = np.arange(H * V)
    d = np.sqrt((grid_off // V) ** 2 / m.ell_h + (grid_off % V) ** 2 / m.ell_v)
    beam_tab = matern(d, model.beam_params.nu)
    lag = dt.astype(np.int64)
    if not np.array_equal(lag, dt):  # fractional slots: evaluate directly
        return time_kernel(model.time_params, dt, 0.0) * beam_tab[off]
    max_lag = int(lag.max()) if lag.size else 0
    time_tab = time_kernel(model.time_params, np.arange(max_lag + 1), 0)
    return time_tab[lag] * beam_tab[off]


def jittered_cholesky(a):
    """Lower Cholesky factor of ``a + jitter * I`` and the jitter used."""
    n = a.shape[0]
    scale = np.trace(a) / n if n else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    rel = JITTER_START
    while rel <= JITTER_MAX * (1 + 1e-9):
        jitter = rel * scale
        try:
            L = linalg.cholesky(a + jitter * np.eye(n), lower=True, check_finite=False)
            return L, jitter
        except linalg.LinAlgError:
            rel *= 10.0
    try:
        cond = np.linalg.cond(a)
    except np.linalg.LinAlgError:
        cond = np.inf
    raise GpConditioningError(
        f"Cholesky failed up to jitter {JITTER_MAX:g} x {scale:.3g} "
        f"(n={n}, cond={cond:.3g}, min eig={np.linalg.eigvalsh(a).min():.3g})")


@dataclass(frozen=True)
class Posterior:
    slot: int
    mean: np.ndarray
    std: np.ndarray
    cross_cov: np.ndarray
    jitter: float = 0.0


def posterior_at_slot(model, grid, t):
    """Exact GP posterior of every beam's RSRP at slot ``t``."""
    n_beams = len(grid) if grid is not None else model.n_beams
    if n_beams != model.n_beams:
        raise ValueError(f"grid has {n_beams} beams, model expects {model.n_beams}")
    if model.n_obs and t < model.slots.max():
        raise ValueError(f"query slot {t} precedes buffered slot {model.slots.max()}")
    all_beams = np.arange(n_beams)
    query_slots = np.full(n_beams, t)
    prior = model.prior_mean.values
    k_ss = cross_gram(model, query_slots, all_beams, query_slots, all_beams)
    if model.n_obs == 0:
        cov = k_ss
        return Posterior(int(t), prior.copy(), np.sqrt(np.clip(np.diag(cov), 0, None)), cov, 0.0)
    k_bb = cross_gram(model, model.slots, model.beams, model.slots, model.beams)
    k_bb[np.diag_indices_from(k_bb)] += model.noise_std ** 2
    L, jitter = jittered_cholesky(k_bb)
    k_bs = cross_gram(model, model.slots, model.beams, query_slots, all_beams)
    resid = model.values - prior[model.beams]
    alpha = linalg.cho_solve((L, True), resid, check_finite=False)
    mean = prior + k_bs.T @ alpha
    v = linalg.solve_triangular(L, k_bs, lower=True, check_finite=False)
    cov = k_ss - v.T @ v
    cov = 0.5 * (cov + cov.T)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return Posterior(int(t), mean, std, cov, jitter)


# likelihood and fitting


def matern_slope(d, nu):
    """``-matern'(d) / d``, finite at ``d = 0`` for ``nu > 1`` (0 is returned there otherwise)."""
    d = np.asarray(d, dtype=float)
    if nu == 0.5:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(d > 0, np.exp(-d) / np.where(d > 0, d, 1.0), 0.0)
    if nu == 1.5:
        return 3.0 * np.exp(-np.sqrt(3.0) * d)
    if nu == 2.5:
        r = np.sqrt(5.0) * d
        return (5.0 / 3.0) * (1.0 + r) * np.exp(-r)
    # d/dr [r^nu K_nu(r)] = -r^nu K_{nu-1}(r)
    c = 2.0 ** (1.0 - nu) / special.gamma(nu)
    r = np.sqrt(2.0 * nu) * d
    out = np.full(r.shape, nu / (nu - 1.0) if nu > 1 else 0.0)
    pos = r > 0
    rp = r[pos]
    out[pos] = 2.0 * nu * c * rp ** (nu - 1.0) * special.kv(nu - 1.0, rp)
    return out


class _LmlTerms:
    """Integer-coded buffer pairs, reused across likelihood evaluations.

    Every pair ``(i, j)`` of buffered points maps to a time-lag code and a
    beam-offset code, so the kernel only has to be evaluated on two small
    tables per call.
    """

    def __init__(self, model):
        H, V = model.grid_shape
        s = model.slots.astype(np.int64)
        h, v = model.hv(model.beams)
        lags, lag_code = np.unique(np.abs(s[:, None] - s[None, :]), return_inverse=True)
        self.lag_code = np.ascontiguousarray(lag_code.reshape(s.shape[0], s.shape[0]))
        self.lag2 = lags.astype(float) ** 2
        self.off_code = np.ascontiguousarray(
            np.abs(h[:, None] - h[None, :]) * V + np.abs(v[:, None] - v[None, :]))
        off = np.arange(H * V)
        self.dh2 = (off // V).astype(float) ** 2
        self.dv2 = (off % V).astype(float) ** 2
        self.resid = model.values - model.prior_mean.values[model.beams]
        self.nu = model.beam_params.nu
        self.n = s.shape[0]

    def tables(self, theta1, theta2, ell_h, ell_v):
        et = np.exp(-self.lag2 / theta2 ** 2)
        d = np.sqrt(self.dh2 / ell_h + self.dv2 / ell_v)
        return theta1 * et, matern(d, self.nu), d

    def evaluate(self, logp, grad=True):
        theta1, theta2, ell_h, ell_v, sigma = np.exp(logp)
        time_tab, beam_tab, d = self.tables(theta1, theta2, ell_h, ell_v)
        k = kernels.table_gram(self.lag_code, self.off_code, time_tab, beam_tab)
        k[np.diag_indices_from(k)] += sigma ** 2
        L, _ = jittered_cholesky(k)
        alpha = linalg.cho_solve((L, True), self.resid, check_finite=False)
        lml = (-0.5 * self.resid @ alpha - np.log(np.diag(L)).sum()
               - 0.5 * self.n * LOG_2PI)
        if not grad:
            return lml, None
        kinv, info = linalg.lapack.dpotri(L, lower=1)
        if info != 0:
            raise GpConditioningError(f"potri failed with info={info}")
        # only the lower triangle of kinv is valid; cell_sums reads only that
        w = np.outer(alpha, alpha) - kinv
        cells = kernels.cell_sums(w, self.lag_code, self.off_code,
                                  time_tab.shape[0], beam_tab.shape[0])
        kf = np.outer(time_tab, beam_tab)
        slope = 0.5 * np.outer(time_tab, matern_slope(d, self.nu))
        g = 0.5 * np.array([
            np.sum(cells * kf),
            np.sum(cells * kf * (2.0 * self.lag2 / theta2 ** 2)[:, None]),
            np.sum(cells * slope * (self.dh2 / ell_h)[None, :]),
            np.sum(cells * slope * (self.dv2 / ell_v)[None, :]),
            (alpha @ alpha - np.trace(kinv)) * 2.0 * sigma ** 2,
        ])
        return lml, g


def log_marginal_likelihood(model):
    if model.n_obs == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    with np.errstate(divide="ignore"):  # a noiseless model has log(sigma) = -inf
        logp = np.log(model.hyperparameters())
    lml, _ = _LmlTerms(model).evaluate(logp, grad=False)
    return float(lml)


def fit_hyperparameters(model, seed=0, restarts=None):
    """Multi-start L-BFGS-B on the log marginal likelihood in log-parameter space.

    The first start is the incumbent (clipped to bounds), the remaining
    ``restarts - 1`` (default ``model.restarts``) are uniform in the log box.
    The incumbent is kept unless a start strictly improves the likelihood.
    ``nu`` is not fitted.
    """
    restarts = model.restarts if restarts is None else restarts
    if model.n_obs < max(model.fit_min_points, 1):
        return model
    terms = _LmlTerms(model)
    lb = np.array(model.bounds.log_bounds())
    x_inc = np.log(model.hyperparameters())
    try:
        best_f, _ = terms.evaluate(x_inc, grad=False)
    except GpConditioningError:
        best_f = -np.inf
    best_x = x_inc

    def objective(x):
        try:
            f, g = terms.evaluate(x)
        except GpConditioningError:
            return 1e300, np.zeros_like(x)
        return -f, -g

    rng = np.random.default_rng(seed)
    starts = [np.clip(x_inc, lb[:, 0], lb[:, 1])]
    for _ in range(max(restarts, 1) - 1):
        starts.append(rng.uniform(lb[:, 0], lb[:, 1]))
    for x0 in starts:
        try:
            res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B",
                                    bounds=lb, options={"maxiter": model.fit_maxiter})
        except (ValueError, np.linalg.LinAlgError):
            continue
        x = np.clip(res.x, lb[:, 0], lb[:, 1])
        try:
            f, _ = terms.evaluate(x, grad=False)
        except GpConditioningError:
            continue
        if np.isfinite(f) and f > best_f:
            best_f, best_x = f, x
    if best_x is x_inc:
        return model
    return model.with_hyperparameters(*np.exp(best_x))
